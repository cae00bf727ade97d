"""Monte-Carlo study of multi-mode fiber MIMO channels.

Random-matrix propagation model (per-section unitaries, mode-dependent
loss, group delay), end-to-end MDL statistics, ergodic Shannon capacity
under flat and multi-carrier transmission, and mode-coupling strategies
compared over shared trial schedules.
"""

from .capacity import (
    NormalizationConstant,
    PowerAllocation,
    SnrSpec,
    capacity_from_gains,
    config_key,
    estimate_normalization,
    flat_capacity,
    ofdm_capacity,
    snr_linear,
    waterfill,
)
from .coupling import (
    CoupledChannel,
    CouplingPair,
    controlled_pair,
    couple,
    proposition1_check,
    random_pair,
)
from .fiber import (
    EndToEndDecomposition,
    FiberRealization,
    PropagationConfig,
    SectionParams,
    decompose,
    frequency_invariance_check,
    mdps_invariance_check,
    pooled_rho,
    power_gains,
    response_at,
    sample_fiber,
    xi_from_db,
)
from .harness import (
    Histogram,
    PerSnrResult,
    Scenario,
    SemicircleFit,
    SweepResult,
    capacity_ratio_db,
    ergodic_capacity,
    estimate_scenario_normalization,
    figure4_comparison,
    fit_semicircle,
    horizontal_offsets_db,
    max_relative_gap,
    mdl_histogram,
    trial_generator,
)
from .randmat import (
    haar_unitary,
    haar_unitary_batch,
    ks_critical_value,
    left_invariance_statistic,
    make_rng,
    stiefel_sample,
    unitarity_residual,
)

__version__ = "0.1.0"

__all__ = [
    "CoupledChannel",
    "CouplingPair",
    "EndToEndDecomposition",
    "FiberRealization",
    "Histogram",
    "NormalizationConstant",
    "PerSnrResult",
    "PowerAllocation",
    "PropagationConfig",
    "Scenario",
    "SectionParams",
    "SemicircleFit",
    "SnrSpec",
    "SweepResult",
    "capacity_from_gains",
    "capacity_ratio_db",
    "config_key",
    "controlled_pair",
    "couple",
    "decompose",
    "ergodic_capacity",
    "estimate_normalization",
    "estimate_scenario_normalization",
    "figure4_comparison",
    "fit_semicircle",
    "flat_capacity",
    "frequency_invariance_check",
    "haar_unitary",
    "haar_unitary_batch",
    "horizontal_offsets_db",
    "ks_critical_value",
    "left_invariance_statistic",
    "make_rng",
    "max_relative_gap",
    "mdl_histogram",
    "mdps_invariance_check",
    "ofdm_capacity",
    "pooled_rho",
    "power_gains",
    "proposition1_check",
    "random_pair",
    "response_at",
    "sample_fiber",
    "snr_linear",
    "stiefel_sample",
    "trial_generator",
    "unitarity_residual",
    "waterfill",
    "xi_from_db",
    "__version__",
]
