"""Input/output coupler construction and the coupled channel H_t = C_O H C_I.

A transmitter drives N_t sources into an M-mode fiber through an input
coupler C_I (M x N_t, orthonormal columns: energy conservation); the
receiver taps N_r outputs through C_O (N_r x M, orthonormal rows).  Two
coupler families are provided: the channel-aware scheme that couples into
the N_t least lossy end-to-end eigenmodes via the channel's singular
vectors, and blind random couplers drawn uniformly from the Stiefel
manifold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capacity import flat_capacity
from .fiber import EndToEndDecomposition
from .randmat import stiefel_sample

__all__ = [
    "CouplingPair",
    "CoupledChannel",
    "SCENARIO_LABELS",
    "couple",
    "controlled_pair",
    "random_pair",
    "proposition1_check",
]

SCENARIO_LABELS = ("controlled", "random", "nmode_baseline", "ideal")

_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class CouplingPair:
    """Input coupler (orthonormal columns) and output coupler (orthonormal rows)."""

    c_i: np.ndarray
    c_o: np.ndarray

    def __post_init__(self):
        c_i, c_o = np.asarray(self.c_i), np.asarray(self.c_o)
        if c_i.ndim != 2 or c_o.ndim != 2:
            raise ValueError("couplers must be matrices")
        m, n_t = c_i.shape
        n_r, m_o = c_o.shape
        if n_t > m or n_r > m_o:
            raise ValueError(
                f"couplers cannot have more ports than modes: {c_i.shape}, {c_o.shape}"
            )
        gram_i = c_i.conj().T @ c_i - np.eye(n_t)
        gram_o = c_o @ c_o.conj().T - np.eye(n_r)
        if np.max(np.abs(gram_i)) > _ORTHO_TOL:
            raise ValueError("input coupler columns are not orthonormal")
        if np.max(np.abs(gram_o)) > _ORTHO_TOL:
            raise ValueError("output coupler rows are not orthonormal")

    @property
    def n_t(self) -> int:
        return self.c_i.shape[1]

    @property
    def n_r(self) -> int:
        return self.c_o.shape[0]


@dataclass(frozen=True)
class CoupledChannel:
    """Overall N_r x N_t response seen between coupler ports."""

    h_t: np.ndarray
    scenario: str

    def __post_init__(self):
        if self.scenario not in SCENARIO_LABELS:
            raise ValueError(
                f"scenario must be one of {SCENARIO_LABELS}, got {self.scenario!r}"
            )
        if self.scenario == "controlled":
            h_t = np.asarray(self.h_t)
            off = h_t - np.diag(np.diag(h_t))
            if np.max(np.abs(off)) > 1e-8:
                raise ValueError("controlled coupling must diagonalize the channel")
            d = np.diag(h_t)
            if np.max(np.abs(d.imag)) > 1e-8:
                raise ValueError("controlled diagonal must be real")
            r = d.real
            if np.any(r < -1e-8) or np.any(r[1:] > r[:-1] + 1e-8):
                raise ValueError("controlled diagonal must be nonnegative descending")


def couple(h: np.ndarray, pair: CouplingPair, scenario: str = "random") -> CoupledChannel:
    """Overall coupled response H_t = C_O H C_I."""
    h = np.asarray(h)
    m_rows, m_cols = h.shape
    if pair.c_o.shape[1] != m_rows or pair.c_i.shape[0] != m_cols:
        raise ValueError(
            f"coupler/channel dimension mismatch: C_O {pair.c_o.shape}, "
            f"H {h.shape}, C_I {pair.c_i.shape}"
        )
    return CoupledChannel(h_t=pair.c_o @ h @ pair.c_i, scenario=scenario)


def controlled_pair(decomp: EndToEndDecomposition, n_t: int, n_r: int) -> CouplingPair:
    """Channel-aware couplers from the channel's singular vectors.

    C_I is the first n_t columns of V_H and C_O the first n_r rows of
    U_H*, so coupling through the decomposed channel yields
    H_t = diag(lambda_1, ..., lambda_{n_t}): the n_t least lossy
    end-to-end eigenmodes as parallel AWGN channels.  Requires channel
    knowledge (the decomposition) wherever the couplers are realized.
    """
    if n_t != n_r:
        raise ValueError(
            f"channel-aware coupling supports only n_t = n_r, got {n_t} != {n_r}"
        )
    m = decomp.u_h.shape[0]
    if not (1 <= n_t <= m):
        raise ValueError(f"need 1 <= n_t <= {m}, got {n_t}")
    return CouplingPair(
        c_i=decomp.v_h[:, :n_t],
        c_o=decomp.u_h[:, :n_r].conj().T,
    )


def random_pair(m: int, n_t: int, n_r: int, rng: np.random.Generator) -> CouplingPair:
    """Blind couplers drawn uniformly from the Stiefel manifold.

    C_I and C_O come from independent draws (input coupler first); the
    output coupler is the conjugate transpose of an m x n_r frame.
    """
    c_i = stiefel_sample(m, n_t, rng)
    c_o = stiefel_sample(m, n_r, rng).conj().T
    return CouplingPair(c_i=c_i, c_o=c_o)


def proposition1_check(
    h: np.ndarray,
    pair: CouplingPair,
    v_i: np.ndarray,
    u_o: np.ndarray,
    snr,
) -> tuple[float, float]:
    """Coupled capacity before and after unitary re-mixing of the couplers.

    Replaces C_I by C_I v_i and C_O by u_o C_O; both remain valid
    couplers and the coupled capacity is unchanged (the singular values
    of H_t are invariant), so the two returned values agree to float
    rounding.
    """
    base = flat_capacity(couple(h, pair).h_t, snr, pair.n_t)
    # Built directly so a non-unitary v_i or u_o (which no longer forms a
    # valid coupler) still evaluates, as the comparison's negative control.
    remixed_h_t = (u_o @ pair.c_o) @ np.asarray(h) @ (pair.c_i @ v_i)
    remixed = flat_capacity(remixed_h_t, snr, pair.n_t)
    return base, remixed
