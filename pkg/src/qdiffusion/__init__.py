"""Quantum wave-packet diffusion driven by space-time correlated Gaussian noise.

Simulation (split-step trajectories, noise-averaged density matrix),
closed-form reference results in three correlation-time regimes, and the
estimators that compare the two.
"""

__version__ = "0.1.0"

from .model import (
    Grid,
    PacketSpec,
    PhysicalParams,
    RegimeTag,
    WaveFunction,
    derive_couplings,
    initial_packet,
    time_modulation,
)
from .noisefield import (
    NoiseSlice,
    NoiseSpec,
    RngStream,
    advance_slice,
    sample_stationary_slice,
    spatial_kernel_f,
    validate_correlator,
    white_noise_slice,
)
from .propagator import (
    DensityRelative,
    density_from_packet,
    dephasing_step,
    evolve_master,
    evolve_trajectory,
    momentum_transform,
    split_step,
)
from .analytics import (
    charfn_joint,
    correlation_coefficient,
    density_momentum,
    msd_analytic,
    msm_analytic,
    nongaussian_K,
    table1_value,
)
from .estimators import (
    FitResult,
    MomentSeries,
    combined_entropy,
    detect_crossover,
    ensemble_reduce,
    entropy,
    fit_power_law,
    moment,
)

__all__ = [
    "__version__",
    "Grid", "PacketSpec", "PhysicalParams", "RegimeTag", "WaveFunction",
    "derive_couplings", "initial_packet", "time_modulation",
    "NoiseSlice", "NoiseSpec", "RngStream", "advance_slice",
    "sample_stationary_slice", "spatial_kernel_f", "validate_correlator",
    "white_noise_slice",
    "DensityRelative", "density_from_packet", "dephasing_step",
    "evolve_master", "evolve_trajectory", "momentum_transform", "split_step",
    "charfn_joint", "correlation_coefficient", "density_momentum",
    "msd_analytic", "msm_analytic", "nongaussian_K", "table1_value",
    "FitResult", "MomentSeries", "combined_entropy", "detect_crossover",
    "ensemble_reduce", "entropy", "fit_power_law", "moment",
]
