"""Simulation toolkit for harmonic-oscillator noise spectrum analyzers.

Filter functions of coherently driven and number-state trapped-ion motion,
synthetic trap-frequency noise, Monte Carlo measurement protocols, and power
spectral density reconstruction, with a CLI front end (``hosa``).
"""

from .analyzer import (
    ALPHA_WINDOW,
    AmplitudeScanResult,
    ExperimentConfig,
    PsdEstimate,
    ScanResult,
    capped_s0,
    effective_readout,
    estimate_psd,
    run_monte_carlo,
    scan_drive_amplitude,
    scan_filters,
    scan_noise_frequency,
    sensitivity_floor,
)
from .coherent import (
    DriveWaveform,
    ReadoutModel,
    displaced_thermal_populations,
    drive_from_filter,
    final_displacement_ensemble,
    fourth_order_response,
    integrate_trajectory,
    predistort,
    quadratic_fit,
    rabi_ratio,
    small_angle_response,
    spin_flip_probability,
    trajectory_grid,
)
from .config import ConfigError, InfeasibleError, RunPlan, load_run_plan
from .filters import (
    BlackmanFilterSpec,
    FrequencyFilter,
    PiecewiseSensitivity,
    amplification,
    blackman_filter_amplitude,
    blackman_frequency_filter,
    blackman_sensitivity,
    fwhm,
    piecewise_filter_amplitude,
    piecewise_frequency_filter,
    piecewise_values,
)
from .fock import (
    QUADRATIC_PHASE_LIMIT,
    Pulse,
    PulseSequence,
    SequenceConstraints,
    SequenceOptimization,
    SequenceTarget,
    optimize_sequence,
    phase_accumulation,
    propagate_sequence_numeric,
    rabi_mismatch_sensitivity,
    read_sequence,
    readout_probability,
    reference_target,
    sensitivity_from_sequence,
    sequence_from_json,
    sequence_to_json,
    superposition_path,
    write_sequence,
)
from .noise import (
    CompositeNoise,
    NoiseModel,
    PowerLawNoise,
    SinusoidalNoise,
    WhiteBandNoise,
)
from .numerics import RandomStream, TimeGrid, rng_stream

__version__ = "0.1.0"

__all__ = [
    "ALPHA_WINDOW",
    "AmplitudeScanResult",
    "BlackmanFilterSpec",
    "CompositeNoise",
    "ConfigError",
    "DriveWaveform",
    "ExperimentConfig",
    "FrequencyFilter",
    "InfeasibleError",
    "NoiseModel",
    "PiecewiseSensitivity",
    "PowerLawNoise",
    "PsdEstimate",
    "Pulse",
    "PulseSequence",
    "QUADRATIC_PHASE_LIMIT",
    "RandomStream",
    "ReadoutModel",
    "RunPlan",
    "ScanResult",
    "SequenceConstraints",
    "SequenceOptimization",
    "SequenceTarget",
    "SinusoidalNoise",
    "TimeGrid",
    "WhiteBandNoise",
    "amplification",
    "blackman_filter_amplitude",
    "blackman_frequency_filter",
    "blackman_sensitivity",
    "capped_s0",
    "displaced_thermal_populations",
    "drive_from_filter",
    "effective_readout",
    "estimate_psd",
    "final_displacement_ensemble",
    "fourth_order_response",
    "fwhm",
    "integrate_trajectory",
    "load_run_plan",
    "optimize_sequence",
    "phase_accumulation",
    "piecewise_filter_amplitude",
    "piecewise_frequency_filter",
    "piecewise_values",
    "predistort",
    "propagate_sequence_numeric",
    "quadratic_fit",
    "rabi_mismatch_sensitivity",
    "rabi_ratio",
    "read_sequence",
    "readout_probability",
    "reference_target",
    "rng_stream",
    "run_monte_carlo",
    "scan_drive_amplitude",
    "scan_filters",
    "scan_noise_frequency",
    "sensitivity_floor",
    "sensitivity_from_sequence",
    "sequence_from_json",
    "sequence_to_json",
    "small_angle_response",
    "spin_flip_probability",
    "superposition_path",
    "trajectory_grid",
    "write_sequence",
]
