"""Multi-section random propagation model for multi-mode fiber MIMO channels.

A fiber is modeled as K statistically independent sections.  Section k
applies H^k(w) = U^k diag(exp(g/2 - j theta - j w tau - j w^2 alpha)) V^k*,
with U^k, V^k Haar unitary (mode coupling at section interfaces), g the
per-mode log-power gains (mode-dependent loss, MDL), theta per-mode phase
shifts (MDPS), tau group delays (GD), and alpha group-velocity dispersion
(GVD).  The end-to-end response at angular frequency w is the product
H(w) = H^K(w) ... H^1(w); its singular values lambda_n define the
end-to-end MDL values rho_n = 2 ln(lambda_n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .randmat import haar_unitary_batch

__all__ = [
    "PropagationConfig",
    "SectionParams",
    "FiberRealization",
    "EndToEndDecomposition",
    "xi_from_db",
    "sample_fiber",
    "response_at",
    "power_gains",
    "decompose",
    "pooled_rho",
    "mdps_invariance_check",
    "frequency_invariance_check",
]

LOG10_OVER_10 = math.log(10.0) / 10.0

MDL_CORRELATIONS = ("independent", "fully_correlated")


def xi_from_db(xi_db: float) -> float:
    """Convert accumulated MDL std from dB to log-power units (ln 10 / 10)."""
    return xi_db * LOG10_OVER_10


@dataclass(frozen=True)
class PropagationConfig:
    """Parameters of the K-section random propagation model.

    Parameters
    ----------
    modes : int
        Number of spatial degrees of freedom M (both polarizations counted).
    sections : int
        Number of independent sections K.
    xi_db : float
        Accumulated MDL standard deviation in dB; per-section std is
        sigma = xi / sqrt(K) in log-power units unless `section_sigmas`
        overrides it.
    gd_std : float
        Per-section group-delay standard deviation in seconds.
    gvd_std : float
        Per-section GVD standard deviation in seconds^2.
    mdl_correlation : str
        "independent" draws one MDL value per mode per section;
        "fully_correlated" draws a single shared value per section.
    include_mdps, include_gd, include_gvd : bool
        Whether per-mode phases theta, delays tau, and dispersion alpha
        are drawn (otherwise they are exactly zero).
    section_sigmas : tuple of float, optional
        Explicit per-section MDL stds; their squares must sum to xi^2.
    """

    modes: int
    sections: int
    xi_db: float
    gd_std: float = 10e-12
    gvd_std: float = 0.0
    mdl_correlation: str = "independent"
    include_mdps: bool = True
    include_gd: bool = False
    include_gvd: bool = False
    section_sigmas: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError(f"modes must be >= 1, got {self.modes}")
        if self.sections < 1:
            raise ValueError(f"sections must be >= 1, got {self.sections}")
        if self.xi_db < 0:
            raise ValueError(f"xi_db must be >= 0, got {self.xi_db}")
        if self.gd_std < 0 or self.gvd_std < 0:
            raise ValueError("gd_std and gvd_std must be >= 0")
        if self.mdl_correlation not in MDL_CORRELATIONS:
            raise ValueError(
                f"mdl_correlation must be one of {MDL_CORRELATIONS}, "
                f"got {self.mdl_correlation!r}"
            )
        if self.section_sigmas is not None:
            sig = np.asarray(self.section_sigmas, dtype=float)
            if sig.shape != (self.sections,):
                raise ValueError(
                    f"section_sigmas must have length {self.sections}, "
                    f"got {sig.shape}"
                )
            if np.any(sig < 0):
                raise ValueError("section_sigmas must be >= 0")
            xi2 = self.xi
            if abs(float(np.sum(sig**2)) - xi2**2) > 1e-8 * max(xi2**2, 1e-30):
                raise ValueError(
                    "section_sigmas squares must sum to the accumulated "
                    f"MDL variance {xi2**2:.6g}"
                )

    @property
    def xi(self) -> float:
        """Accumulated MDL std in log-power units."""
        return xi_from_db(self.xi_db)

    @property
    def sigma(self) -> float:
        """Per-section MDL std under homogeneous sections."""
        return self.xi / math.sqrt(self.sections)

    def sigmas(self) -> np.ndarray:
        """Per-section MDL stds as a length-K vector."""
        if self.section_sigmas is not None:
            return np.asarray(self.section_sigmas, dtype=float)
        return np.full(self.sections, self.sigma)

    @property
    def has_mdl(self) -> bool:
        return bool(np.any(self.sigmas() > 0.0))


@dataclass(frozen=True)
class SectionParams:
    """One section's coupling unitaries and per-mode propagation coefficients."""

    u: np.ndarray
    v: np.ndarray
    g: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray

    def response_at(self, omega: float) -> np.ndarray:
        """This section's M-by-M response at angular frequency omega."""
        d = np.exp(0.5 * self.g - 1j * (self.theta + omega * self.tau + omega**2 * self.alpha))
        return (self.u * d) @ self.v.conj().T


@dataclass(frozen=True)
class FiberRealization:
    """A sampled fiber: one SectionParams per section, plus its config."""

    config: PropagationConfig
    sections: tuple[SectionParams, ...]

    def __post_init__(self):
        if len(self.sections) != self.config.sections:
            raise ValueError(
                f"expected {self.config.sections} sections, got {len(self.sections)}"
            )


@dataclass(frozen=True)
class EndToEndDecomposition:
    """SVD of an end-to-end response H = U_H diag(lambda) V_H*.

    `singular_values` is sorted descending; `rho` holds the end-to-end
    MDL values rho_n = 2 ln(lambda_n).
    """

    u_h: np.ndarray
    singular_values: np.ndarray
    v_h: np.ndarray
    rho: np.ndarray = field(init=False)

    def __post_init__(self):
        lam = self.singular_values
        if np.any(lam < 0) or np.any(lam[:-1] < lam[1:]):
            raise ValueError("singular values must be nonnegative and descending")
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "rho", 2.0 * np.log(lam))

    def reconstruct(self) -> np.ndarray:
        return (self.u_h * self.singular_values) @ self.v_h.conj().T


def sample_fiber(config: PropagationConfig, rng: np.random.Generator) -> FiberRealization:
    """Draw one fiber realization.

    Draw order is fixed (unitaries for all sections first, then MDL,
    then phases, delays, dispersion) so equal generator states produce
    identical realizations.  Coefficients gated off by the config flags
    are exactly zero and consume no random draws.
    """
    m, k = config.modes, config.sections
    uv = haar_unitary_batch(m, 2 * k, rng)
    sig = config.sigmas()
    if config.mdl_correlation == "fully_correlated":
        shared = rng.standard_normal(k) * sig
        g = np.repeat(shared[:, None], m, axis=1)
    else:
        g = rng.standard_normal((k, m)) * sig[:, None]
    if config.include_mdps:
        theta = rng.uniform(0.0, 2.0 * math.pi, (k, m))
    else:
        theta = np.zeros((k, m))
    if config.include_gd:
        tau = rng.standard_normal((k, m)) * config.gd_std
    else:
        tau = np.zeros((k, m))
    if config.include_gvd:
        alpha = rng.standard_normal((k, m)) * config.gvd_std
    else:
        alpha = np.zeros((k, m))
    sections = tuple(
        SectionParams(u=uv[2 * i], v=uv[2 * i + 1], g=g[i], theta=theta[i],
                      tau=tau[i], alpha=alpha[i])
        for i in range(k)
    )
    return FiberRealization(config=config, sections=sections)


def response_at(fiber: FiberRealization, omega: float) -> np.ndarray:
    """End-to-end response H(omega), the ordered product over all sections."""
    h = np.eye(fiber.config.modes, dtype=np.complex128)
    for sec in fiber.sections:
        d = np.exp(0.5 * sec.g - 1j * (sec.theta + omega * sec.tau + omega**2 * sec.alpha))
        h = (sec.u * d) @ (sec.v.conj().T @ h)
    return h


def power_gains(fiber: FiberRealization, omega: float) -> np.ndarray:
    """Squared singular values of H(omega), descending.

    A fiber whose sections all have zero MDL std is a product of unitary
    factors, so its gains are exactly one; that case is returned
    analytically rather than as SVD rounding noise.
    """
    if not fiber.config.has_mdl:
        return np.ones(fiber.config.modes)
    s = np.linalg.svd(response_at(fiber, omega), compute_uv=False)
    return s**2


def decompose(h: np.ndarray) -> EndToEndDecomposition:
    """Full SVD of a square end-to-end response."""
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    u, s, vh = np.linalg.svd(h)
    return EndToEndDecomposition(u_h=u, singular_values=s, v_h=vh.conj().T)


def pooled_rho(
    config: PropagationConfig,
    trials: int,
    rng: np.random.Generator,
    omega: float = 0.0,
) -> np.ndarray:
    """End-to-end MDL values rho pooled over modes for `trials` realizations."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    out = np.empty((trials, config.modes))
    for t in range(trials):
        out[t] = np.log(power_gains(sample_fiber(config, rng), omega))
    return out.ravel()


def mdps_invariance_check(
    config: PropagationConfig, trials: int, rng: np.random.Generator
) -> float:
    """KS statistic between pooled rho with and without per-mode phases.

    Runs `trials` realizations with include_mdps on and `trials` with it
    off (flat regime, omega = 0) and returns the two-sample KS distance.
    The end-to-end MDL law does not depend on the phases, so the
    statistic stays below the critical value at any fixed significance.
    """
    if trials < 1000:
        raise ValueError(f"need trials >= 1000 for a stable comparison, got {trials}")
    with_phases = pooled_rho(replace(config, include_mdps=True), trials, rng)
    without = pooled_rho(replace(config, include_mdps=False), trials, rng)
    return float(stats.ks_2samp(with_phases, without).statistic)


def frequency_invariance_check(
    config: PropagationConfig,
    omega_a: float,
    omega_b: float,
    trials: int,
    rng: np.random.Generator,
) -> float:
    """KS statistic between pooled rho at two frequencies.

    Uses independent realizations for the two arms.  Requires a
    frequency-dependent config (group delay or GVD drawn), since the
    comparison is vacuous for a flat channel.
    """
    if not (config.include_gd or config.include_gvd):
        raise ValueError("config is frequency-flat: enable group delay or GVD")
    if trials < 1000:
        raise ValueError(f"need trials >= 1000 for a stable comparison, got {trials}")
    rho_a = pooled_rho(config, trials, rng, omega=omega_a)
    rho_b = pooled_rho(config, trials, rng, omega=omega_b)
    return float(stats.ks_2samp(rho_a, rho_b).statistic)
