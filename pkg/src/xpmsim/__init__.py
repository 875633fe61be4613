"""Simulation of cross-phase modulation in an atomic-vapour-filled fibre.

Modules: atomic (lineshapes and the hyperfine manifold), kerr (calibrated
phase and absorption observables), detection (dual-tone heterodyne
measurement with shot noise), fitting (Levenberg-Marquardt and the shipped
models), harness (experiment pipelines), config and cli (JSON runs).
"""

from .atomic import (
    AtomicConstants,
    ComplexSpectrum,
    HyperfineManifold,
    LineshapeParams,
    complex_voigt,
    default_lineshape,
    default_manifold,
    manifold_susceptibility,
    spectrum_grid,
)
from .detection import (
    DetectorModel,
    LockinResult,
    TimeSeries,
    ToneConfig,
    derive_seed,
    lockin_demodulate,
    measure_cross_phase,
    shot_noise_floor,
    shot_noise_floor_first_principles,
    synthesize_beatnote,
    wrap_phase,
)
from .config import RunConfig, config_from_dict, parse_config
from .errors import CalibrationError, ConfigError, DomainError
from .fitting import (
    FitResult,
    confidence_interval,
    dispersion_profile_model,
    least_squares_fit,
    loglog_slope,
    power_law_model,
    saturation_law_model,
)
from .harness import (
    DesignParams,
    ModelBundle,
    NoiseCharacterization,
    ScanConfig,
    SweepConfig,
    SweepResult,
    default_bundle,
    default_meter_values,
    default_scan_grid,
    default_signal_values,
    detection_improvement,
    extrapolate_design,
    operating_point_detuning,
    run_meter_sweep,
    run_noise_characterization,
    run_signal_sweep,
    run_spectrum_scan,
)
from .kerr import (
    BeamPowers,
    CalibrationAnchors,
    FiberCell,
    KerrCalibration,
    PhaseAbsorptionSpectrum,
    calibrate,
    meter_phase_shift,
    n2_from_phase,
    phase_per_atom,
    phase_per_photon,
    ratio_spectrum,
    transmission,
    vapor_density,
)

__version__ = "0.1.0"
