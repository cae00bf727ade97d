"""Random matrix sampling: Haar-distributed unitaries and Stiefel frames.

Unitary matrices are drawn uniformly (Haar measure) by QR-factoring a
complex Gaussian (Ginibre) matrix and correcting the phase ambiguity of
the factorization with the diagonal phases of R.  Stiefel frames (tall
matrices with orthonormal columns) are random column subsets of a Haar
unitary.  The module also provides the eigenphase-based distributional
test statistics used to validate rotational invariance.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

__all__ = [
    "make_rng",
    "haar_unitary",
    "haar_unitary_batch",
    "stiefel_sample",
    "eigenphases",
    "left_invariance_statistic",
    "ks_critical_value",
    "unitarity_residual",
]


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator from a 64-bit seed (PCG64).

    Equal seeds yield identical sample sequences on every platform.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _ginibre(m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    # i.i.d. standard complex Gaussian entries: real and imaginary parts
    # each N(0, 1/2), so complex variance is 1.  Drawn interleaved
    # (re, im) so a batch of one consumes the stream exactly like a
    # single draw.
    z = rng.standard_normal((count, m, 2 * m)).view(np.complex128)
    z *= math.sqrt(0.5)
    return z


def haar_unitary_batch(m: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` independent Haar unitaries as a (count, m, m) array.

    Each sample is Lambda @ Q where Z = QR is the QR factorization of a
    Ginibre matrix and Lambda = diag(r_ii / |r_ii|) removes the phase
    convention of the QR routine.
    """
    if m < 1:
        raise ValueError(f"matrix dimension must be positive, got {m}")
    if count < 1:
        raise ValueError(f"sample count must be positive, got {count}")
    z = _ginibre(m, count, rng)
    q, r = np.linalg.qr(z)
    d = np.einsum("...ii->...i", r)
    lam = d / np.abs(d)
    return lam[:, :, None] * q


def haar_unitary(m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one m-by-m unitary matrix uniformly from the Haar measure."""
    return haar_unitary_batch(m, 1, rng)[0]


def stiefel_sample(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the Stiefel manifold of m-by-n orthonormal frames.

    Draws a Haar unitary and keeps n of its columns, chosen uniformly
    without replacement by a partial Fisher-Yates shuffle on the same
    generator.  Haar measure is permutation invariant, so the subset
    choice does not bias the law; it is kept random for faithfulness to
    the column-selection construction.
    """
    if n < 1 or m < 1:
        raise ValueError(f"dimensions must be positive, got m={m}, n={n}")
    if n > m:
        raise ValueError(f"cannot select {n} orthonormal columns in dimension {m}")
    a = haar_unitary(m, rng)
    idx = np.arange(m)
    for i in range(n):
        j = i + int(rng.integers(m - i))
        idx[i], idx[j] = idx[j], idx[i]
    return a[:, np.sort(idx[:n])]


def eigenphases(samples: np.ndarray) -> np.ndarray:
    """Pooled eigenvalue phases in (-pi, pi] of a stack of square matrices."""
    samples = np.asarray(samples)
    if samples.ndim == 2:
        samples = samples[None]
    return np.angle(np.linalg.eigvals(samples)).ravel()


def left_invariance_statistic(samples, fixed: np.ndarray) -> float:
    """Two-sample KS distance between eigenphases of {U} and {fixed @ U}.

    Small values support rotational invariance of the sampling law: for
    a Haar ensemble the two populations share one distribution, so the
    statistic stays below the KS critical value at any fixed level.
    """
    arr = np.asarray(samples)
    if arr.size == 0:
        raise ValueError("need at least one sample matrix")
    if arr.ndim == 2:
        arr = arr[None]
    fixed = np.asarray(fixed)
    if fixed.shape != arr.shape[1:]:
        raise ValueError(
            f"fixed matrix shape {fixed.shape} does not match samples {arr.shape[1:]}"
        )
    rotated = np.matmul(fixed, arr)
    return float(stats.ks_2samp(eigenphases(arr), eigenphases(rotated)).statistic)


def ks_critical_value(n: int, m: int | None = None, alpha: float = 0.01) -> float:
    """Asymptotic KS critical value at level alpha.

    One-sample for size n, or two-sample for sizes n and m.
    """
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    if m is None:
        return c / math.sqrt(n)
    return c * math.sqrt((n + m) / (n * m))


def unitarity_residual(u: np.ndarray) -> float:
    """Max absolute entry of U*U - I, the orthonormality defect."""
    u = np.asarray(u)
    n = u.shape[-1]
    gram = np.matmul(np.conj(np.swapaxes(u, -2, -1)), u)
    return float(np.max(np.abs(gram - np.eye(n))))
