"""Monte-Carlo orchestration: scenario definitions, deterministic parallel
trial scheduling, ergodic-capacity sweeps, MDL histograms, and the
five-way coupling comparison.

Determinism contract: every trial t of a run derives its generator from
(master_seed, stream, t, config tag) through a SeedSequence, so results
are independent of how trials are partitioned across workers; per-trial
rows are reduced in trial order, making output byte-identical for any
worker count.  BLAS threading is pinned to one thread inside trial loops
so the arithmetic itself does not depend on the executing machine's
core count.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import multiprocessing
import numpy as np
from scipy import optimize, stats
from threadpoolctl import threadpool_limits

from .capacity import NormalizationConstant, config_key, snr_linear
from .fiber import PropagationConfig, power_gains, response_at, sample_fiber
from .coupling import random_pair

__all__ = [
    "SCENARIO_KINDS",
    "TRIAL_STREAM",
    "NORM_STREAM",
    "Scenario",
    "PerSnrResult",
    "SweepResult",
    "Histogram",
    "SemicircleFit",
    "trial_generator",
    "run_trials",
    "scenario_trial_gains",
    "estimate_scenario_normalization",
    "ergodic_capacity",
    "mdl_histogram",
    "figure4_comparison",
    "fit_semicircle",
    "horizontal_offsets_db",
    "max_relative_gap",
    "capacity_ratio_db",
]

SCENARIO_KINDS = (
    "intrinsic_all_modes",
    "controlled",
    "random_coupling",
    "nmode_baseline",
    "ideal_fiber",
)

# Sub-seed streams: capacity/histogram trials vs normalization trials.
TRIAL_STREAM = 0
NORM_STREAM = 1


def trial_generator(
    master_seed: int, stream: int, index: int, salt: tuple[int, ...] = ()
) -> np.random.Generator:
    """Generator for one trial, independent of trial partitioning.

    The spawn key mixes the stream id, the trial index, and a salt
    identifying the sampled population, so distinct populations sharing
    a master seed do not replay each other's draws.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream, index) + salt)
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Scenario:
    """One arm of the capacity study.

    kind selects how per-trial channel power gains are produced:

    - intrinsic_all_modes: all M eigenmode gains of the fiber itself.
    - controlled: the n_t largest gains (channel-aware coupling).
    - random_coupling: gains of C_O H C_I with blind Stiefel couplers.
    - nmode_baseline: a fiber that physically has only n_t modes
      (config.modes == n_t); its unitary couplers leave gains unchanged.
    - ideal_fiber: lossless uncoupled reference with unit gains.
    """

    kind: str
    config: PropagationConfig
    n_t: int
    n_r: int
    snr_grid: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"kind must be one of {SCENARIO_KINDS}, got {self.kind!r}")
        if len(self.snr_grid) == 0:
            raise ValueError("snr_grid must be nonempty")
        if not all(math.isfinite(s) for s in self.snr_grid):
            raise ValueError("snr_grid values must be finite")
        m = self.config.modes
        if not (1 <= self.n_t <= m and 1 <= self.n_r <= m):
            raise ValueError(
                f"need 1 <= n_t, n_r <= modes={m}, got n_t={self.n_t}, n_r={self.n_r}"
            )
        if self.kind == "controlled" and self.n_t != self.n_r:
            raise ValueError("controlled coupling requires n_t = n_r")
        if self.kind == "intrinsic_all_modes" and not (self.n_t == self.n_r == m):
            raise ValueError("intrinsic scenario drives all modes: n_t = n_r = modes")
        if self.kind == "nmode_baseline" and not (self.n_t == self.n_r == m):
            raise ValueError("nmode baseline is a fiber with modes = n_t = n_r")
        if self.kind == "ideal_fiber":
            if not (self.n_t == self.n_r == m):
                raise ValueError("ideal fiber has modes = n_t = n_r")
            if self.config.xi_db != 0 or self.config.sections != 1:
                raise ValueError("ideal fiber means one section and zero MDL")

    # -- constructors ------------------------------------------------------

    @classmethod
    def intrinsic(cls, config: PropagationConfig, snr_grid) -> "Scenario":
        m = config.modes
        return cls("intrinsic_all_modes", config, m, m, tuple(snr_grid))

    @classmethod
    def controlled(cls, config: PropagationConfig, n: int, snr_grid) -> "Scenario":
        return cls("controlled", config, n, n, tuple(snr_grid))

    @classmethod
    def random_coupling(
        cls, config: PropagationConfig, n_t: int, snr_grid, n_r: int | None = None
    ) -> "Scenario":
        return cls("random_coupling", config, n_t, n_r if n_r is not None else n_t,
                   tuple(snr_grid))

    @classmethod
    def nmode_baseline(cls, config: PropagationConfig, n: int, snr_grid) -> "Scenario":
        return cls("nmode_baseline", replace(config, modes=n), n, n, tuple(snr_grid))

    @classmethod
    def ideal_fiber(cls, n: int, snr_grid) -> "Scenario":
        config = PropagationConfig(modes=n, sections=1, xi_db=0.0)
        return cls("ideal_fiber", config, n, n, tuple(snr_grid))

    # -- derived -----------------------------------------------------------

    @property
    def streams(self) -> int:
        """Number of equal-power transmit streams (SNR is split across these)."""
        return self.n_t

    @property
    def gains_per_trial(self) -> int:
        if self.kind == "intrinsic_all_modes":
            return self.config.modes
        if self.kind == "random_coupling":
            return min(self.n_t, self.n_r)
        return self.n_t

    @property
    def norm_key(self) -> str:
        """Identifier of the gain population this scenario is normalized by."""
        base = config_key(self.config)
        if self.kind == "controlled":
            return f"controlled top-{self.n_t} of {base}"
        if self.kind == "random_coupling":
            return f"random {self.n_r}x{self.n_t} of {base}"
        if self.kind == "ideal_fiber":
            return "ideal unit gains"
        return base

    def salt(self) -> tuple[int, ...]:
        # Keyed on the fiber config only, so scenarios over the same fiber
        # population share realizations trial-for-trial (common random
        # numbers), while different fiber configs get unrelated draws.
        return (zlib.crc32(config_key(self.config).encode()),)


@dataclass(frozen=True)
class PerSnrResult:
    snr_db: float
    capacity_mean: float
    stderr: float
    trials: int

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class SweepResult:
    scenario: Scenario
    per_snr: tuple[PerSnrResult, ...]

    def snrs(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.per_snr])

    def capacities(self) -> np.ndarray:
        return np.array([p.capacity_mean for p in self.per_snr])

    def stderrs(self) -> np.ndarray:
        return np.array([p.stderr for p in self.per_snr])


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts)
        if edges.ndim != 1 or counts.ndim != 1 or edges.size != counts.size + 1:
            raise ValueError("edges must be one longer than counts")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly ascending")
        if int(np.sum(counts)) != self.total:
            raise ValueError("counts must sum to total")

    def density(self) -> np.ndarray:
        widths = np.diff(self.edges)
        return self.counts / (self.total * widths)

    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


@dataclass(frozen=True)
class SemicircleFit:
    r_squared: float
    radius: float
    skewness: float


# ---------------------------------------------------------------------------
# Deterministic trial execution


def _chunk_worker(payload):
    fn, fn_args, master_seed, stream, start, stop = payload
    with threadpool_limits(limits=1):
        rows = [fn(*fn_args, master_seed, stream, t) for t in range(start, stop)]
    return start, np.asarray(rows)


def run_trials(
    fn,
    fn_args: tuple,
    trials: int,
    master_seed: int,
    stream: int,
    workers: int = 1,
) -> np.ndarray:
    """Evaluate fn(*fn_args, master_seed, stream, t) for t = 0..trials-1.

    Returns the stacked rows in trial order.  `fn` must be a module-level
    function returning a fixed-length vector; rows are computed serially
    or across processes, with identical results either way.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if master_seed < 0:
        raise ValueError("master_seed must be a nonnegative integer")
    if workers <= 1 or trials == 1:
        _, rows = _chunk_worker((fn, fn_args, master_seed, stream, 0, trials))
        return rows
    workers = min(workers, trials)
    chunk = max(1, math.ceil(trials / (workers * 4)))
    payloads = [
        (fn, fn_args, master_seed, stream, start, min(start + chunk, trials))
        for start in range(0, trials, chunk)
    ]
    ctx = multiprocessing.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        parts = sorted(pool.map(_chunk_worker, payloads), key=lambda p: p[0])
    return np.vstack([rows for _, rows in parts])


def scenario_trial_gains(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Channel power gains (lambda^2) for one trial of a scenario.

    For the channel-aware arm the coupled gains are exactly the n_t
    largest fiber gains (the couplers diagonalize the channel), so they
    are read off the fiber SVD; the full coupler construction is
    exercised and cross-checked in the coupling module.  The n-mode
    baseline's unitary couplers leave singular values unchanged, so its
    gains are the fiber gains themselves.
    """
    cfg = scenario.config
    if scenario.kind == "ideal_fiber":
        return np.ones(scenario.n_t)
    if not cfg.has_mdl and scenario.kind != "random_coupling":
        # A lossless fiber is unitary at every frequency, so every gain is
        # exactly 1; per-trial generators are independent, so skipping the
        # draws cannot shift any other trial's stream.
        return np.ones(scenario.gains_per_trial)
    fiber = sample_fiber(cfg, rng)
    if scenario.kind in ("intrinsic_all_modes", "nmode_baseline"):
        return power_gains(fiber, 0.0)
    if scenario.kind == "controlled":
        return power_gains(fiber, 0.0)[: scenario.n_t]
    # random_coupling: fiber draws first, then input coupler, then output.
    h = response_at(fiber, 0.0)
    pair = random_pair(cfg.modes, scenario.n_t, scenario.n_r, rng)
    s = np.linalg.svd(pair.c_o @ h @ pair.c_i, compute_uv=False)
    return s**2


def _scenario_row(scenario, master_seed, stream, t):
    rng = trial_generator(master_seed, stream, t, scenario.salt())
    return scenario_trial_gains(scenario, rng)


def _joint_row(intrinsic_sc, random_sc, master_seed, stream, t):
    # One shared-fiber trial feeding three arms: all fiber gains, plus the
    # randomly coupled gains of the same realization.  Consumes the
    # generator exactly like the standalone scenarios (fiber first, then
    # couplers), so per-arm results match standalone runs bit for bit.
    rng = trial_generator(master_seed, stream, t, intrinsic_sc.salt())
    cfg = intrinsic_sc.config
    fiber = sample_fiber(cfg, rng)
    h = response_at(fiber, 0.0)
    if cfg.has_mdl:
        gains = np.linalg.svd(h, compute_uv=False) ** 2
    else:
        gains = np.ones(cfg.modes)
    pair = random_pair(cfg.modes, random_sc.n_t, random_sc.n_r, rng)
    s = np.linalg.svd(pair.c_o @ h @ pair.c_i, compute_uv=False)
    return np.concatenate([gains, s**2])


# ---------------------------------------------------------------------------
# Normalization and sweeps


def estimate_scenario_normalization(
    scenario: Scenario, trials: int, master_seed: int, workers: int = 1
) -> NormalizationConstant:
    """Pooled E[lambda^2] of the gain population this scenario averages over.

    Populations whose gains are identically one by construction (unit
    references, and any lossless fiber seen through gain-preserving
    couplings) get the exact constant 1.0.
    """
    exact_one = scenario.kind == "ideal_fiber" or (
        not scenario.config.has_mdl and scenario.kind != "random_coupling"
    )
    if exact_one:
        return NormalizationConstant(1.0, max(trials, 1), scenario.norm_key)
    if trials < 100:
        raise ValueError(f"need trials >= 100 for a usable estimate, got {trials}")
    rows = run_trials(_scenario_row, (scenario,), trials, master_seed, NORM_STREAM,
                      workers)
    return NormalizationConstant(float(np.mean(rows)), trials, scenario.norm_key)


def _sweep_from_rows(
    scenario: Scenario, rows: np.ndarray, norm: NormalizationConstant
) -> SweepResult:
    normalized = rows / norm.mean_eigenvalue
    trials = rows.shape[0]
    per_snr = []
    for snr_db in scenario.snr_grid:
        a = snr_linear(snr_db) / scenario.streams
        terms = np.log2(1.0 + a * normalized)
        # Correctly-rounded row sums: a row of M equal terms reduces to
        # exactly M times the term, matching the closed form bit for bit.
        caps = np.fromiter((math.fsum(row) for row in terms), float, trials)
        # Shift by the first value before reducing: identical trials then
        # yield a bit-exact mean and an exactly zero stderr.
        d = caps - caps[0]
        mean = float(caps[0] + np.mean(d))
        stderr = float(np.std(d, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        per_snr.append(PerSnrResult(float(snr_db), mean, stderr, trials))
    return SweepResult(scenario=scenario, per_snr=tuple(per_snr))


def ergodic_capacity(
    scenario: Scenario,
    trials: int,
    master_seed: int,
    norm: NormalizationConstant,
    workers: int = 1,
) -> SweepResult:
    """Monte-Carlo ergodic capacity of a scenario over its SNR grid."""
    if norm.config_key != scenario.norm_key:
        raise ValueError(
            f"normalization constant was pooled from {norm.config_key!r} "
            f"but this scenario averages over {scenario.norm_key!r}"
        )
    rows = run_trials(_scenario_row, (scenario,), trials, master_seed, TRIAL_STREAM,
                      workers)
    return _sweep_from_rows(scenario, rows, norm)


def _rho_row(config, master_seed, stream, t):
    if not config.has_mdl:
        return np.zeros(config.modes)  # lossless: rho is identically zero
    rng = trial_generator(master_seed, stream, t,
                          (zlib.crc32(config_key(config).encode()),))
    return np.log(power_gains(sample_fiber(config, rng), 0.0))


def mdl_histogram(
    config: PropagationConfig,
    trials: int,
    bins: int,
    master_seed: int,
    workers: int = 1,
) -> tuple[Histogram, np.ndarray]:
    """Histogram of end-to-end MDL values pooled over modes and trials.

    Returns the histogram and the raw pooled rho values (the latter feed
    moment and shape diagnostics that binning would blur).
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if trials * config.modes < 10 * bins:
        raise ValueError(
            f"need trials*modes >= 10*bins for a meaningful histogram, "
            f"got {trials}*{config.modes} < 10*{bins}"
        )
    rows = run_trials(_rho_row, (config,), trials, master_seed, TRIAL_STREAM, workers)
    pooled = rows.ravel()
    counts, edges = np.histogram(pooled, bins=bins)
    hist = Histogram(edges=edges, counts=counts, total=int(pooled.size))
    return hist, pooled


def figure4_comparison(
    m: int,
    n: int,
    k: int,
    xi_db: float,
    snr_grid,
    trials: int,
    master_seed: int,
    workers: int = 1,
    norm_trials: int | None = None,
) -> list[SweepResult]:
    """Five-way coupling study over a shared trial schedule.

    Returns sweeps in the order [intrinsic, controlled, random_coupling,
    nmode_baseline, ideal_fiber].  The three arms living on the same
    M-mode fiber population share realizations trial-for-trial (common
    random numbers); each arm is normalized by its own population's
    pooled E[lambda^2].  Results are bit-identical to running each
    scenario separately with the same master seed.
    """
    snr_grid = tuple(snr_grid)
    cfg = PropagationConfig(modes=m, sections=k, xi_db=xi_db)
    intrinsic_sc = Scenario.intrinsic(cfg, snr_grid)
    controlled_sc = Scenario.controlled(cfg, n, snr_grid)
    random_sc = Scenario.random_coupling(cfg, n, snr_grid)
    nmode_sc = Scenario.nmode_baseline(cfg, n, snr_grid)
    ideal_sc = Scenario.ideal_fiber(n, snr_grid)
    if norm_trials is None:
        norm_trials = max(100, min(trials, 2000))

    joint_args = (intrinsic_sc, random_sc)
    norm_rows = run_trials(_joint_row, joint_args, norm_trials, master_seed,
                           NORM_STREAM, workers)
    norms = {
        "intrinsic": NormalizationConstant(
            float(np.mean(norm_rows[:, :m])), norm_trials, intrinsic_sc.norm_key),
        "controlled": NormalizationConstant(
            float(np.mean(norm_rows[:, :n])), norm_trials, controlled_sc.norm_key),
        "random": NormalizationConstant(
            float(np.mean(norm_rows[:, m:])), norm_trials, random_sc.norm_key),
    }

    main_rows = run_trials(_joint_row, joint_args, trials, master_seed, TRIAL_STREAM,
                           workers)
    sweeps = [
        _sweep_from_rows(intrinsic_sc, main_rows[:, :m], norms["intrinsic"]),
        _sweep_from_rows(controlled_sc, main_rows[:, :n], norms["controlled"]),
        _sweep_from_rows(random_sc, main_rows[:, m:], norms["random"]),
    ]
    nmode_norm = estimate_scenario_normalization(nmode_sc, norm_trials, master_seed,
                                                 workers)
    sweeps.append(ergodic_capacity(nmode_sc, trials, master_seed, nmode_norm, workers))
    ideal_norm = estimate_scenario_normalization(ideal_sc, norm_trials, master_seed,
                                                 workers)
    sweeps.append(ergodic_capacity(ideal_sc, trials, master_seed, ideal_norm, workers))
    return sweeps


# ---------------------------------------------------------------------------
# Shape and curve diagnostics


def _semicircle_density(x: np.ndarray, radius: float) -> np.ndarray:
    inside = np.clip(radius**2 - x**2, 0.0, None)
    return 2.0 / (math.pi * radius**2) * np.sqrt(inside)


def fit_semicircle(values: np.ndarray, bins: int = 60) -> SemicircleFit:
    """Least-squares semicircle fit to the standardized empirical density.

    Values are shifted and scaled to zero mean and unit variance, binned,
    and fit against a centered semicircle density with free radius.
    Returns the coefficient of determination of the fit, the fitted
    radius (on the standardized scale), and the sample skewness.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 10 * bins:
        raise ValueError(f"need at least {10 * bins} values to fit {bins} bins")
    std = float(np.std(values))
    if std == 0.0:
        raise ValueError("distribution is degenerate: zero variance")
    z = (values - np.mean(values)) / std
    density, edges = np.histogram(z, bins=bins, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])

    def sse(radius: float) -> float:
        return float(np.sum((density - _semicircle_density(centers, radius)) ** 2))

    res = optimize.minimize_scalar(sse, bounds=(0.05, 10.0), method="bounded")
    radius = float(res.x)
    total = float(np.sum((density - np.mean(density)) ** 2))
    r_squared = 1.0 - sse(radius) / total
    return SemicircleFit(
        r_squared=float(r_squared),
        radius=radius,
        skewness=float(stats.skew(z)),
    )


def _snr_to_reach(sweep: SweepResult, levels: np.ndarray) -> np.ndarray:
    snrs, caps = sweep.snrs(), sweep.capacities()
    if np.any(np.diff(caps) <= 0):
        raise ValueError("capacity curve must be strictly increasing to invert")
    out = np.interp(levels, caps, snrs)
    # np.interp clamps outside the curve's range; extend with the end
    # segments instead (capacity is asymptotically linear in SNR dB, so
    # the top-segment slope is the right continuation).
    lo, hi = caps[0], caps[-1]
    below, above = levels < lo, levels > hi
    if np.any(below):
        slope = (snrs[1] - snrs[0]) / (caps[1] - caps[0])
        out[below] = snrs[0] + (levels[below] - lo) * slope
    if np.any(above):
        slope = (snrs[-1] - snrs[-2]) / (caps[-1] - caps[-2])
        out[above] = snrs[-1] + (levels[above] - hi) * slope
    return out


def horizontal_offsets_db(ref: SweepResult, other: SweepResult) -> np.ndarray:
    """Extra SNR `other` needs to reach each capacity level `ref` achieves.

    Evaluated at every point of ref's grid: positive entries mean `other`
    trails `ref` by that many dB of SNR at the same capacity.
    """
    return _snr_to_reach(other, ref.capacities()) - ref.snrs()


def max_relative_gap(a: SweepResult, b: SweepResult) -> float:
    """Largest pointwise |a - b| / b over the shared SNR grid."""
    ca, cb = a.capacities(), b.capacities()
    if ca.shape != cb.shape or not np.allclose(a.snrs(), b.snrs()):
        raise ValueError("sweeps must share one SNR grid")
    return float(np.max(np.abs(ca - cb) / cb))


def capacity_ratio_db(a: SweepResult, b: SweepResult) -> np.ndarray:
    """Pointwise capacity ratio a/b expressed in dB."""
    ca, cb = a.capacities(), b.capacities()
    if ca.shape != cb.shape or not np.allclose(a.snrs(), b.snrs()):
        raise ValueError("sweeps must share one SNR grid")
    return 10.0 * np.log10(ca / cb)
