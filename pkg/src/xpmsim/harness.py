"""Experiment orchestration: spectrum scan, power sweeps, noise runs, design study.

Each pipeline is a pure function of (config, model bundle) plus an integer
seed.  Per-point random streams are derived from (run seed, point index,
trial index), so results are independent of evaluation order and of the
worker count; set XPMSIM_THREADS to cap the thread pool.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from .atomic import (
    AtomicConstants,
    ComplexSpectrum,
    HyperfineManifold,
    LineshapeParams,
    default_lineshape,
    default_manifold,
)
from .detection import (
    DetectorModel,
    ToneConfig,
    derive_seed,
    effective_window,
    measure_cross_phase,
    shot_noise_floor,
    shot_noise_floor_first_principles,
)
from .errors import DomainError
from .fitting import least_squares_fit, loglog_slope, saturation_law_model
from .kerr import (
    BeamPowers,
    CalibrationAnchors,
    FiberCell,
    KerrCalibration,
    PhaseAbsorptionSpectrum,
    calibrate,
    dispersion_reference,
    meter_phase_shift,
    saturation_factor,
    transmission,
)

__all__ = [
    "OPERATING_POINTS",
    "operating_point_detuning",
    "ModelBundle",
    "default_bundle",
    "ScanConfig",
    "SweepConfig",
    "SweepResult",
    "DesignParams",
    "NoiseCharacterization",
    "parallel_map",
    "run_spectrum_scan",
    "run_signal_sweep",
    "run_meter_sweep",
    "run_noise_characterization",
    "extrapolate_design",
    "detection_improvement",
]

_T = TypeVar("_T")
_R = TypeVar("_R")

# saturation powers (phase, absorption) in watts for each operating point
_DEFAULT_SATURATION: dict[str, tuple[float, float]] = {
    "max_phase": (3e-6, 3e-6),
    "detuned_minus_35MHz": (20e-6, 20e-6),
}
_DETUNED_OFFSET = -2.0 * math.pi * 35e6

OPERATING_POINTS = tuple(_DEFAULT_SATURATION)


def parallel_map(fn: Callable[[_T], _R], items: Iterable[_T]) -> list[_R]:
    """Map preserving order; worker count from XPMSIM_THREADS (default 1)."""
    items = list(items)
    raw = os.environ.get("XPMSIM_THREADS", "1")
    try:
        workers = max(1, int(raw))
    except ValueError:
        raise DomainError(f"XPMSIM_THREADS must be an integer, got {raw!r}")
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ModelBundle:
    """Everything a pipeline needs: medium, calibration, detection chain."""

    consts: AtomicConstants = AtomicConstants()
    cell: FiberCell = FiberCell()
    manifold: HyperfineManifold = field(default_factory=default_manifold)
    lineshape: LineshapeParams = field(default_factory=default_lineshape)
    calibration: KerrCalibration | None = None
    saturation_powers: tuple[tuple[str, tuple[float, float]], ...] = tuple(
        _DEFAULT_SATURATION.items()
    )
    tones: ToneConfig = ToneConfig()
    detector: DetectorModel = DetectorModel()
    time_constant: float = 1e-6

    def __post_init__(self) -> None:
        if not (math.isfinite(self.time_constant) and self.time_constant > 0):
            raise DomainError("time_constant must be positive")
        names = [n for n, _ in self.saturation_powers]
        if sorted(names) != sorted(_DEFAULT_SATURATION):
            raise DomainError(
                f"saturation_powers must cover exactly {sorted(_DEFAULT_SATURATION)}"
            )
        for n, (ps, pa) in self.saturation_powers:
            if not (ps > 0 and pa > 0):
                raise DomainError(f"saturation powers for {n} must be positive")

    def saturation_for(self, operating_point: str) -> tuple[float, float]:
        for name, powers in self.saturation_powers:
            if name == operating_point:
                return powers
        raise DomainError(f"unknown operating point {operating_point!r}")

    def calibration_for(self, operating_point: str) -> KerrCalibration:
        if self.calibration is None:
            raise DomainError("bundle has no calibration; run calibrate first")
        p_sat_phase, p_sat_abs = self.saturation_for(operating_point)
        return self.calibration.with_saturation(p_sat_phase, p_sat_abs)


def default_bundle(anchors: CalibrationAnchors | None = None) -> ModelBundle:
    """Bundle with default medium, calibrated at the standard anchors."""
    bundle = ModelBundle()
    anchors = anchors if anchors is not None else CalibrationAnchors()
    cal = calibrate(anchors, bundle.cell, bundle.consts)
    return replace(bundle, calibration=cal)


def operating_point_detuning(operating_point: str,
                             manifold: HyperfineManifold,
                             lineshape: LineshapeParams) -> float:
    """Two-photon detuning in rad/s for a named operating point."""
    if operating_point == "max_phase":
        return dispersion_reference(manifold, lineshape)[0]
    if operating_point == "detuned_minus_35MHz":
        return _DETUNED_OFFSET
    raise DomainError(f"unknown operating point {operating_point!r}")


@dataclass(frozen=True)
class ScanConfig:
    """Detuning scan at fixed beam powers."""

    detuning_grid: np.ndarray = field(repr=False)
    powers: BeamPowers
    include_detection_noise: bool = False
    seeds: tuple[int, ...] = (0,)

    def __init__(self, detuning_grid, powers: BeamPowers,
                 include_detection_noise: bool = False, seeds=(0,)) -> None:
        grid = np.asarray(detuning_grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise DomainError("detuning_grid must hold at least two points")
        if not np.all(np.isfinite(grid)) or not np.all(np.diff(grid) > 0):
            raise DomainError("detuning_grid must be finite and strictly increasing")
        if isinstance(seeds, (int, np.integer)):
            seeds = (int(seeds),)
        else:
            seeds = tuple(int(s) for s in seeds)
        if not seeds:
            raise DomainError("seeds must not be empty")
        object.__setattr__(self, "detuning_grid", grid)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "include_detection_noise", bool(include_detection_noise))
        object.__setattr__(self, "seeds", seeds)


def default_scan_grid(n_points: int = 801,
                      half_span: float = 2.0 * math.pi * 80e6) -> np.ndarray:
    return np.linspace(-half_span, half_span, n_points)


@dataclass(frozen=True)
class SweepConfig:
    """One-axis power sweep at a fixed operating point."""

    axis: str                      # "signal_power" or "meter_power"
    values: tuple[float, ...]      # W, strictly increasing
    fixed_power: float             # W, the other beam
    operating_point: str = "max_phase"

    def __post_init__(self) -> None:
        if self.axis not in ("signal_power", "meter_power"):
            raise DomainError(f"unknown sweep axis {self.axis!r}")
        vals = tuple(float(v) for v in self.values)
        if len(vals) < 3:
            raise DomainError("sweep needs at least three values")
        if any(not (math.isfinite(v) and v > 0) for v in vals):
            raise DomainError("sweep values must be positive")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise DomainError("sweep values must be strictly increasing")
        if not (math.isfinite(self.fixed_power) and self.fixed_power >= 0):
            raise DomainError("fixed_power must be non-negative")
        if self.operating_point not in _DEFAULT_SATURATION:
            raise DomainError(f"unknown operating point {self.operating_point!r}")
        object.__setattr__(self, "values", vals)


def default_signal_values(n: int = 13) -> tuple[float, ...]:
    return tuple(np.geomspace(0.5e-6, 50e-6, n))


def default_meter_values(n: int = 13) -> tuple[float, ...]:
    return tuple(np.geomspace(0.3e-6, 100e-6, n))


@dataclass(frozen=True)
class SweepResult:
    axis_values: np.ndarray
    phase: np.ndarray
    absorption: np.ndarray          # optical depth, -ln T
    ci_halfwidths: np.ndarray
    metadata: dict

    def __post_init__(self) -> None:
        n = np.asarray(self.axis_values).size
        for name in ("phase", "absorption", "ci_halfwidths"):
            if np.asarray(getattr(self, name)).size != n:
                raise DomainError(f"{name} length does not match axis_values")


@dataclass(frozen=True)
class DesignParams:
    """Multiplicative improvement factors for the scaled-up design."""

    core_factor: float = 80.0      # smaller core: better atom-light coupling
    density_factor: float = 200.0  # light-induced desorption density gain
    length_factor: float = 10.0    # longer fibre or slow light
    qe_new: float = 0.9            # improved detector efficiency
    baseline_phi_ph: float = 1.3e-6  # rad/photon at current operating point

    def __post_init__(self) -> None:
        for name in ("core_factor", "density_factor", "length_factor",
                     "qe_new", "baseline_phi_ph"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class NoiseCharacterization:
    p_met_values: np.ndarray
    mc_std: np.ndarray                    # Monte Carlo phase std, rad
    predicted_std: np.ndarray             # shot-noise prediction, rad
    reported_floor: np.ndarray            # empirical floor, rad/sqrt(Hz)
    first_principles_floor: np.ndarray    # ideal floor, rad/sqrt(Hz)
    exponent: float
    exponent_ci: float
    n_trials: int
    seed: int

    @property
    def mc_over_predicted(self) -> np.ndarray:
        return self.mc_std / self.predicted_std

    @property
    def floor_ratio(self) -> np.ndarray:
        """Empirical floor over ideal floor (detector and apparatus excess)."""
        return self.reported_floor / self.first_principles_floor


def run_spectrum_scan(config: ScanConfig, bundle: ModelBundle,
                      operating_point: str = "max_phase") -> PhaseAbsorptionSpectrum:
    """Phase and transmission over the detuning grid.

    Noiseless scans are analytic.  With detection noise on, each grid
    point's phase is recovered by the lock-in from synthesized photon
    records (stream derived from (seed, point index)) and averaged over
    the configured seeds; transmission stays analytic.
    """
    cal = bundle.calibration_for(operating_point)
    grid = config.detuning_grid
    phase = meter_phase_shift(bundle.cell, config.powers, grid, cal,
                              bundle.manifold, bundle.lineshape, bundle.consts)
    trans = transmission(bundle.cell, config.powers, grid, cal,
                         bundle.manifold, bundle.lineshape)
    phase = np.asarray(phase, dtype=float)
    if config.include_detection_noise:
        def one_point(idx: int) -> float:
            acc = 0.0
            for seed in config.seeds:
                det = replace(bundle.detector,
                              rng_seed=derive_seed(seed, idx))
                res = measure_cross_phase(float(phase[idx]),
                                          config.powers.p_met, bundle.tones,
                                          det, bundle.time_constant)
                acc += res.phase
            return acc / len(config.seeds)

        phase = np.array(parallel_map(one_point, range(grid.size)))
    return PhaseAbsorptionSpectrum(detunings=grid, phase=phase,
                                   transmission=np.asarray(trans, dtype=float))


def _sweep_phase_and_od(values: np.ndarray, p_sig: float, p_met: np.ndarray,
                        delta_e: float, cal: KerrCalibration,
                        bundle: ModelBundle) -> tuple[np.ndarray, np.ndarray]:
    phase = np.empty(values.size)
    od = np.empty(values.size)
    for i in range(values.size):
        pw = BeamPowers(p_met=float(p_met[i]),
                        p_sig=float(p_sig if np.isscalar(p_sig) else p_sig[i]))
        phase[i] = meter_phase_shift(bundle.cell, pw, delta_e, cal,
                                     bundle.manifold, bundle.lineshape,
                                     bundle.consts)
        od[i] = -math.log(transmission(bundle.cell, pw, delta_e, cal,
                                       bundle.manifold, bundle.lineshape))
    return phase, od


def run_signal_sweep(config: SweepConfig, bundle: ModelBundle) -> SweepResult:
    """Phase and absorption versus signal power at fixed meter power."""
    if config.axis != "signal_power":
        raise DomainError("run_signal_sweep needs axis = signal_power")
    cal = bundle.calibration_for(config.operating_point)
    delta_e = operating_point_detuning(config.operating_point, bundle.manifold,
                                       bundle.lineshape)
    values = np.asarray(config.values)
    p_met = np.full(values.size, config.fixed_power)
    phase, od = _sweep_phase_and_od(values, values, p_met, delta_e, cal, bundle)
    slope, intercept, slope_ci = loglog_slope(values, np.abs(phase))

    # companion number for the record: detuned-to-peak phase ratio at these powers
    pw = BeamPowers(p_met=config.fixed_power, p_sig=float(values[-1]))
    ratio = _detuned_to_max_ratio(pw, bundle)
    meta = {
        "operating_point": config.operating_point,
        "fixed_p_met_w": config.fixed_power,
        "calibration_id": cal.calibration_id,
        "loglog_slope": slope,
        "loglog_intercept": intercept,
        "loglog_slope_ci": slope_ci,
        "detuned_to_max_phase_ratio": ratio,
    }
    return SweepResult(axis_values=values, phase=phase, absorption=od,
                       ci_halfwidths=np.zeros(values.size), metadata=meta)


def _detuned_to_max_ratio(powers: BeamPowers, bundle: ModelBundle) -> float:
    """|phase(detuned point)| / |phase(max point)| at identical powers."""
    num = meter_phase_shift(
        bundle.cell, powers,
        operating_point_detuning("detuned_minus_35MHz", bundle.manifold,
                                 bundle.lineshape),
        bundle.calibration_for("detuned_minus_35MHz"),
        bundle.manifold, bundle.lineshape, bundle.consts)
    den = meter_phase_shift(
        bundle.cell, powers,
        operating_point_detuning("max_phase", bundle.manifold, bundle.lineshape),
        bundle.calibration_for("max_phase"),
        bundle.manifold, bundle.lineshape, bundle.consts)
    return abs(num) / abs(den)


def run_meter_sweep(config: SweepConfig, bundle: ModelBundle) -> SweepResult:
    """Phase and absorption versus meter power at fixed signal power.

    Saturation onset is reported as the fitted P_sat of the
    a/(1 + P/P_sat) law, separately for phase and absorption.
    """
    if config.axis != "meter_power":
        raise DomainError("run_meter_sweep needs axis = meter_power")
    cal = bundle.calibration_for(config.operating_point)
    delta_e = operating_point_detuning(config.operating_point, bundle.manifold,
                                       bundle.lineshape)
    values = np.asarray(config.values)
    phase, od = _sweep_phase_and_od(values, config.fixed_power, values,
                                    delta_e, cal, bundle)

    p_sat_phase, p_sat_abs = bundle.saturation_for(config.operating_point)
    fit_phase = least_squares_fit(saturation_law_model, values, np.abs(phase),
                                  p0=(float(np.abs(phase[0])), float(np.median(values))))
    fit_od = least_squares_fit(saturation_law_model, values, od,
                               p0=(float(od[0]), float(np.median(values))))
    unsaturated = meter_phase_shift(bundle.cell,
                                    BeamPowers(p_met=0.0, p_sig=config.fixed_power),
                                    delta_e, cal, bundle.manifold,
                                    bundle.lineshape, bundle.consts)
    meta = {
        "operating_point": config.operating_point,
        "fixed_p_sig_w": config.fixed_power,
        "calibration_id": cal.calibration_id,
        "fitted_p_sat_phase_w": float(fit_phase.params[1]),
        "fitted_p_sat_abs_w": float(fit_od.params[1]),
        "fitted_unsaturated_phase_rad": float(fit_phase.params[0]),
        "analytic_unsaturated_phase_rad": float(abs(unsaturated)),
        "configured_p_sat_phase_w": p_sat_phase,
        "configured_p_sat_abs_w": p_sat_abs,
    }
    return SweepResult(axis_values=values, phase=phase, absorption=od,
                       ci_halfwidths=np.zeros(values.size), metadata=meta)


def run_noise_characterization(p_met_values: Sequence[float],
                               bundle: ModelBundle,
                               n_trials: int = 100,
                               seed: int = 0,
                               injected_phase: float = 0.5) -> NoiseCharacterization:
    """Monte Carlo phase noise versus meter power, against both floors.

    The prediction is the two-arm shot-noise standard deviation
    sqrt(2*kappa*h*nu/(eta*P*W)) over the lock-in's averaging window W,
    where kappa corrects for the low-pass pole.
    """
    p_vals = np.asarray(list(p_met_values), dtype=float)
    if p_vals.ndim != 1 or p_vals.size == 0 or np.any(p_vals <= 0):
        raise DomainError("p_met_values must be positive")
    if n_trials < 2:
        raise DomainError("need at least two trials")

    det0 = bundle.detector
    tau = bundle.time_constant
    w_dur = effective_window(det0, bundle.tones.offset_freq, tau)
    kappa = 1.0 - (tau / w_dur) * (1.0 - math.exp(-w_dur / tau))
    from scipy.constants import c as c_light
    from scipy.constants import h as h_planck
    photon_energy = h_planck * c_light / bundle.tones.wavelength

    def std_at(args: tuple[int, float]) -> float:
        idx, p = args
        phases = np.empty(n_trials)
        for trial in range(n_trials):
            det = replace(det0, rng_seed=derive_seed(seed, idx, trial))
            res = measure_cross_phase(injected_phase, p, bundle.tones, det,
                                      tau)
            phases[trial] = res.phase
        return float(np.std(phases, ddof=1))

    mc = np.array(parallel_map(std_at, list(enumerate(p_vals))))
    eta = det0.quantum_efficiency
    predicted = np.sqrt(2.0 * kappa * photon_energy / (eta * p_vals * w_dur))
    reported = np.array([shot_noise_floor(p) for p in p_vals])
    fp = np.array([
        shot_noise_floor_first_principles(p, eta, bundle.tones.wavelength)
        for p in p_vals
    ])
    if p_vals.size >= 3:
        exponent, _, exponent_ci = loglog_slope(p_vals, mc)
    else:
        exponent, exponent_ci = math.nan, math.nan
    return NoiseCharacterization(p_met_values=p_vals, mc_std=mc,
                                 predicted_std=predicted, reported_floor=reported,
                                 first_principles_floor=fp, exponent=exponent,
                                 exponent_ci=exponent_ci, n_trials=n_trials,
                                 seed=seed)


def extrapolate_design(params: DesignParams) -> float:
    """Phase per photon of the scaled-up design, rad/photon.

    Quantum efficiency does not enter: it changes how well the phase can
    be resolved, not the phase itself (see detection_improvement).
    """
    return (params.baseline_phi_ph * params.core_factor
            * params.density_factor * params.length_factor)


def detection_improvement(params: DesignParams, qe_old: float = 0.04) -> float:
    """Noise-floor improvement factor from a better detector alone."""
    if not (0.0 < qe_old <= 1.0):
        raise DomainError("qe_old must lie in (0, 1]")
    return math.sqrt(params.qe_new / qe_old)
