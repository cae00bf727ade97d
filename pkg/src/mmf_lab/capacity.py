"""Shannon capacity of MIMO channels: log-det capacity, OFDM averaging,
eigenvalue energy normalization, and waterfilling power allocation.

Capacity follows the equal-power log-det form C = sum_n log2(1 + (SNR/S)
lambda_n^2) with S transmit streams, in b/s/Hz.  Monte-Carlo averages
divide every lambda^2 by a pooled estimate of E[lambda^2] so the channel
ensemble carries no net gain (energy normalization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fiber import PropagationConfig, power_gains, sample_fiber

__all__ = [
    "SnrSpec",
    "NormalizationConstant",
    "PowerAllocation",
    "snr_linear",
    "flat_capacity",
    "capacity_from_gains",
    "ofdm_capacity",
    "estimate_normalization",
    "config_key",
    "waterfill",
]


@dataclass(frozen=True)
class SnrSpec:
    """Signal-to-noise ratio 10*log10(P / (N0 W)) in dB."""

    snr_db: float

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")

    @property
    def linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


def snr_linear(snr) -> float:
    """Linear SNR from an SnrSpec or a plain dB value."""
    if isinstance(snr, SnrSpec):
        return snr.linear
    return SnrSpec(float(snr)).linear


@dataclass(frozen=True)
class NormalizationConstant:
    """Pooled Monte-Carlo estimate of E[lambda^2] used to normalize gains.

    `config_key` records which channel population the estimate was pooled
    from, so a constant cannot silently be applied to a different one.
    """

    mean_eigenvalue: float
    trials_used: int
    config_key: str | None = None

    def __post_init__(self):
        if not (self.mean_eigenvalue > 0):
            raise ValueError(f"mean_eigenvalue must be > 0, got {self.mean_eigenvalue}")
        if self.trials_used < 1:
            raise ValueError(f"trials_used must be >= 1, got {self.trials_used}")


@dataclass(frozen=True)
class PowerAllocation:
    """Waterfilling result: per-channel powers and the water level mu."""

    powers: np.ndarray
    water_level: float


def capacity_from_gains(gains: np.ndarray, snr, streams: int) -> float:
    """Equal-power capacity from channel power gains (lambda_n^2 values).

    The per-mode terms are reduced with a correctly-rounded sum so that M
    equal gains give exactly M times the per-mode capacity.
    """
    if streams < 1:
        raise ValueError(f"streams must be >= 1, got {streams}")
    gains = np.asarray(gains, dtype=float)
    return math.fsum(np.log2(1.0 + (snr_linear(snr) / streams) * gains))


def flat_capacity(h: np.ndarray, snr, streams: int) -> float:
    """Log-det capacity of one channel matrix with equal-power streams.

    Computes sum_n log2(1 + (SNR/streams) lambda_n^2) over the
    eigenvalues lambda_n^2 of H H*.
    """
    if streams < 1:
        raise ValueError(f"streams must be >= 1, got {streams}")
    h = np.asarray(h)
    if h.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {h.shape}")
    s = np.linalg.svd(h, compute_uv=False)
    return capacity_from_gains(s**2, snr, streams)


def ofdm_capacity(h_list, snr, streams: int) -> float:
    """Mean of per-subcarrier flat capacities (OFDM achievable rate)."""
    h_list = list(h_list)
    if not h_list:
        raise ValueError("need at least one sub-carrier matrix")
    shapes = {np.asarray(h).shape for h in h_list}
    if len(shapes) != 1:
        raise ValueError(f"sub-carrier matrices differ in shape: {sorted(shapes)}")
    return float(np.mean([flat_capacity(h, snr, streams) for h in h_list]))


def config_key(config: PropagationConfig) -> str:
    """Stable identifier of the channel population a constant was pooled from."""
    return (
        f"fiber M={config.modes} K={config.sections} xi_db={config.xi_db!r} "
        f"corr={config.mdl_correlation}"
    )


def estimate_normalization(
    config: PropagationConfig, trials: int, rng: np.random.Generator
) -> NormalizationConstant:
    """Estimate E[lambda^2] pooled over all modes and trials at omega = 0.

    For a zero-MDL config every gain is exactly one, so the constant is
    exactly 1.0 rather than a Monte-Carlo estimate of it.
    """
    if trials < 100:
        raise ValueError(f"need trials >= 100 for a usable estimate, got {trials}")
    total = 0.0
    for _ in range(trials):
        total += float(np.mean(power_gains(sample_fiber(config, rng), 0.0)))
    return NormalizationConstant(
        mean_eigenvalue=total / trials,
        trials_used=trials,
        config_key=config_key(config),
    )


def waterfill(gains, total_power: float) -> PowerAllocation:
    """Waterfilling power allocation maximizing sum log(1 + g_n p_n).

    Solves for the water level mu with p_n = max(0, mu - 1/g_n) and
    sum p_n = total_power, by the sorted closed form with a bisection
    fallback; the budget is met to 1e-9 relative.  Zero gains receive
    zero power.
    """
    gains = np.asarray(gains, dtype=float)
    if gains.ndim != 1 or gains.size == 0:
        raise ValueError("gains must be a nonempty vector")
    if np.any(gains < 0):
        raise ValueError("gains must be >= 0")
    if not (total_power > 0):
        raise ValueError(f"total_power must be > 0, got {total_power}")
    if not np.any(gains > 0):
        raise ValueError("no usable channel: all gains are zero")

    pos = gains > 0
    inv = 1.0 / gains[pos]
    order = np.argsort(inv)
    inv_sorted = inv[order]
    mu = None
    prefix = 0.0
    n_pos = inv_sorted.size
    for k in range(1, n_pos + 1):
        prefix += inv_sorted[k - 1]
        candidate = (total_power + prefix) / k
        upper = inv_sorted[k] if k < n_pos else math.inf
        if inv_sorted[k - 1] <= candidate <= upper:
            mu = candidate
            break
    if mu is None:
        # Closed form should always succeed; bisect on the monotone
        # budget function as a numerical fallback.
        lo, hi = float(inv_sorted[0]), float(inv_sorted[-1] + total_power)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.sum(np.maximum(0.0, mid - inv_sorted)) < total_power:
                lo = mid
            else:
                hi = mid
        mu = 0.5 * (lo + hi)

    powers = np.zeros_like(gains)
    powers[pos] = np.maximum(0.0, mu - inv)
    spent = float(np.sum(powers))
    if abs(spent - total_power) > 1e-9 * total_power:
        raise ArithmeticError(
            f"water level missed the power budget: {spent} vs {total_power}"
        )
    return PowerAllocation(powers=powers, water_level=float(mu))
