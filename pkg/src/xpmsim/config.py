"""JSON run configuration: schema, validation, resolution, hashing.

A run is configured by a single JSON document.  Every key is optional;
an empty object resolves to the full default run.  Unknown keys are
rejected with the offending field named.  Spectroscopic frequencies are
given in Hz in the file and converted to angular units internally.

The resolved configuration (all defaults filled in) serializes back to
JSON; its SHA-256 prefix is the config hash embedded in every output
file, so re-parsing a resolved config reproduces the hash exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .atomic import (
    _DEFAULT_OFFSETS_HZ,
    _DEFAULT_STRENGTHS,
    TWO_PI,
    AtomicConstants,
    HyperfineManifold,
    LineshapeParams,
)
from .detection import DetectorModel, ToneConfig
from .errors import ConfigError, DomainError
from .harness import (
    DesignParams,
    ModelBundle,
    ScanConfig,
    SweepConfig,
    default_meter_values,
    default_scan_grid,
    default_signal_values,
)
from .kerr import BeamPowers, CalibrationAnchors, FiberCell, calibrate

__all__ = ["RunConfig", "parse_config", "config_from_dict"]

_SCHEMA: dict[str, dict[str, object]] = {
    "seed": 0,
    "out_dir": "xpmsim-out",
    "atomic": {
        "lambda_met_m": 780e-9,
        "lambda_sig_m": 776e-9,
        "gamma_i_hz": 6.07e6,
        "gamma_e_hz": 10e6,
        "delta_i_hz": 1.2e9,
    },
    "manifold": {
        "offsets_hz": list(_DEFAULT_OFFSETS_HZ),
        "strengths": list(_DEFAULT_STRENGTHS),
    },
    "lineshape": {
        "gamma_l_hz": 3e6,
        "sigma_g_hz": 2.6294e6,
    },
    "cell": {
        "length_m": 0.20,
        "core_diameter_m": 45e-6,
        "mode_area_m2": None,
        "density_m3": 3.9e18,
    },
    "anchors": {
        "phase_target_rad": math.pi,
        "p_sig_w": 25e-6,
        "p_met_w": 1e-6,
        "peak_absorption": 0.70,
    },
    "saturation_powers": {
        "max_phase": {"phase_w": 3e-6, "abs_w": 3e-6},
        "detuned_minus_35MHz": {"phase_w": 20e-6, "abs_w": 20e-6},
    },
    "detection": {
        "offset_freq_hz": 80e6,
        "quantum_efficiency": 0.04,
        "sample_rate_hz": 1e9,
        "duration_s": 100e-6,
        "time_constant_s": 1e-6,
        "wavelength_m": 780e-9,
    },
    "scan": {
        "n_points": 801,
        "half_span_hz": 80e6,
        "p_met_w": 1e-6,
        "p_sig_w": 45e-6,
        "noise": False,
        "n_seeds": 1,
        "operating_point": "max_phase",
    },
    "signal_sweep": {
        "values_w": None,
        "fixed_p_met_w": 1e-6,
        "operating_point": "max_phase",
    },
    "meter_sweep": {
        "values_w": None,
        "fixed_p_sig_w": 25e-6,
        "operating_point": "max_phase",
    },
    "noise": {
        "p_met_values_w": [1e-7, 3.16e-7, 1e-6, 3.16e-6, 1e-5, 3.16e-5, 1e-4],
        "n_trials": 100,
        "injected_phase_rad": 0.5,
    },
    "design": {
        "core_factor": 80.0,
        "density_factor": 200.0,
        "length_factor": 10.0,
        "qe_new": 0.9,
        "baseline_phi_ph": 1.3e-6,
    },
}


def _reject_unknown(given: dict, allowed, where: str) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError("unknown key", field=f"{where}.{unknown[0]}" if where else unknown[0])


def _merge_section(name: str, given: dict) -> dict:
    defaults = _SCHEMA[name]
    if not isinstance(given, dict):
        raise ConfigError("must be an object", field=name)
    _reject_unknown(given, defaults, name)
    return {k: given.get(k, v) for k, v in defaults.items()}


def _num(resolved: dict, section: str, key: str, *, positive: bool = False,
         nonneg: bool = False, upper: float | None = None) -> float:
    v = resolved[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError("must be a finite number", field=f"{section}.{key}")
    v = float(v)
    if positive and v <= 0:
        raise ConfigError("must be positive", field=f"{section}.{key}")
    if nonneg and v < 0:
        raise ConfigError("must be non-negative", field=f"{section}.{key}")
    if upper is not None and v > upper:
        raise ConfigError(f"must be <= {upper}", field=f"{section}.{key}")
    return v


def _int(resolved: dict, section: str, key: str, *, minimum: int) -> int:
    v = resolved[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError("must be an integer", field=f"{section}.{key}")
    if v < minimum:
        raise ConfigError(f"must be >= {minimum}", field=f"{section}.{key}")
    return v


def _num_list(resolved: dict, section: str, key: str, *, positive: bool = False,
              min_len: int = 1) -> list[float]:
    v = resolved[key]
    if not isinstance(v, (list, tuple)) or len(v) < min_len:
        raise ConfigError(f"must be a list of at least {min_len} numbers",
                          field=f"{section}.{key}")
    out = []
    for i, item in enumerate(v):
        if isinstance(item, bool) or not isinstance(item, (int, float)) \
                or not math.isfinite(item):
            raise ConfigError("must be a finite number",
                              field=f"{section}.{key}[{i}]")
        if positive and item <= 0:
            raise ConfigError("must be positive", field=f"{section}.{key}[{i}]")
        out.append(float(item))
    return out


def _operating_point(resolved: dict, section: str) -> str:
    v = resolved["operating_point"]
    if v not in ("max_phase", "detuned_minus_35MHz"):
        raise ConfigError("must be 'max_phase' or 'detuned_minus_35MHz'",
                          field=f"{section}.operating_point")
    return v


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved and validated run configuration."""

    resolved: dict = field(repr=False)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.resolved))

    @property
    def config_hash(self) -> str:
        payload = json.dumps(self.resolved, sort_keys=True,
                             separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @property
    def seed(self) -> int:
        return int(self.resolved["seed"])

    @property
    def out_dir(self) -> str:
        return str(self.resolved["out_dir"])

    def atomic_constants(self) -> AtomicConstants:
        a = self.resolved["atomic"]
        return AtomicConstants(
            lambda_met=a["lambda_met_m"],
            lambda_sig=a["lambda_sig_m"],
            gamma_i=TWO_PI * a["gamma_i_hz"],
            gamma_e=TWO_PI * a["gamma_e_hz"],
            delta_i=TWO_PI * a["delta_i_hz"],
        )

    def manifold(self) -> HyperfineManifold:
        m = self.resolved["manifold"]
        return HyperfineManifold(
            offsets=tuple(TWO_PI * f for f in m["offsets_hz"]),
            strengths=tuple(m["strengths"]),
        )

    def lineshape(self) -> LineshapeParams:
        ls = self.resolved["lineshape"]
        return LineshapeParams(gamma_l=TWO_PI * ls["gamma_l_hz"],
                               sigma_g=TWO_PI * ls["sigma_g_hz"])

    def cell(self) -> FiberCell:
        c = self.resolved["cell"]
        return FiberCell(length=c["length_m"],
                         core_diameter=c["core_diameter_m"],
                         mode_area=c["mode_area_m2"],
                         density_rho=c["density_m3"])

    def anchors(self) -> CalibrationAnchors:
        a = self.resolved["anchors"]
        sat = self.resolved["saturation_powers"]["max_phase"]
        return CalibrationAnchors(
            phase_target=a["phase_target_rad"],
            p_sig=a["p_sig_w"],
            p_met=a["p_met_w"],
            peak_absorption=a["peak_absorption"],
            p_sat_phase=sat["phase_w"],
            p_sat_abs=sat["abs_w"],
        )

    def detector(self, seed: int | None = None) -> DetectorModel:
        d = self.resolved["detection"]
        return DetectorModel(
            quantum_efficiency=d["quantum_efficiency"],
            sample_rate=d["sample_rate_hz"],
            duration=d["duration_s"],
            rng_seed=self.seed if seed is None else seed,
        )

    def tones(self) -> ToneConfig:
        d = self.resolved["detection"]
        return ToneConfig(offset_freq=d["offset_freq_hz"],
                          wavelength=d["wavelength_m"])

    def bundle(self) -> ModelBundle:
        """Calibrated model bundle for the harness pipelines."""
        cell = self.cell()
        consts = self.atomic_constants()
        cal = calibrate(self.anchors(), cell, consts)
        sat = self.resolved["saturation_powers"]
        return ModelBundle(
            consts=consts,
            cell=cell,
            manifold=self.manifold(),
            lineshape=self.lineshape(),
            calibration=cal,
            saturation_powers=tuple(
                (name, (sat[name]["phase_w"], sat[name]["abs_w"]))
                for name in ("max_phase", "detuned_minus_35MHz")
            ),
            tones=self.tones(),
            detector=self.detector(),
            time_constant=self.resolved["detection"]["time_constant_s"],
        )

    def scan_config(self, noise: bool | None = None) -> ScanConfig:
        s = self.resolved["scan"]
        grid = default_scan_grid(s["n_points"], TWO_PI * s["half_span_hz"])
        seeds = tuple(self.seed + i for i in range(s["n_seeds"]))
        return ScanConfig(
            detuning_grid=grid,
            powers=BeamPowers(p_met=s["p_met_w"], p_sig=s["p_sig_w"]),
            include_detection_noise=s["noise"] if noise is None else noise,
            seeds=seeds,
        )

    def scan_operating_point(self) -> str:
        return str(self.resolved["scan"]["operating_point"])

    def signal_sweep_config(self) -> SweepConfig:
        s = self.resolved["signal_sweep"]
        values = s["values_w"] if s["values_w"] is not None else default_signal_values()
        return SweepConfig(axis="signal_power", values=tuple(values),
                           fixed_power=s["fixed_p_met_w"],
                           operating_point=s["operating_point"])

    def meter_sweep_config(self) -> SweepConfig:
        s = self.resolved["meter_sweep"]
        values = s["values_w"] if s["values_w"] is not None else default_meter_values()
        return SweepConfig(axis="meter_power", values=tuple(values),
                           fixed_power=s["fixed_p_sig_w"],
                           operating_point=s["operating_point"])

    def noise_params(self) -> tuple[list[float], int, float]:
        n = self.resolved["noise"]
        return list(n["p_met_values_w"]), int(n["n_trials"]), float(n["injected_phase_rad"])

    def design_params(self) -> DesignParams:
        d = self.resolved["design"]
        return DesignParams(core_factor=d["core_factor"],
                            density_factor=d["density_factor"],
                            length_factor=d["length_factor"],
                            qe_new=d["qe_new"],
                            baseline_phi_ph=d["baseline_phi_ph"])


def _validate(resolved: dict) -> None:
    a = resolved["atomic"]
    for key in ("lambda_met_m", "lambda_sig_m", "gamma_i_hz", "gamma_e_hz",
                "delta_i_hz"):
        _num(a, "atomic", key, positive=True)

    m = resolved["manifold"]
    offsets = _num_list(m, "manifold", "offsets_hz")
    strengths = _num_list(m, "manifold", "strengths", positive=True)
    if len(offsets) != len(strengths):
        raise ConfigError("offsets_hz and strengths must have equal length",
                          field="manifold.strengths")

    ls = resolved["lineshape"]
    _num(ls, "lineshape", "gamma_l_hz", positive=True)
    _num(ls, "lineshape", "sigma_g_hz", nonneg=True)

    c = resolved["cell"]
    _num(c, "cell", "length_m", positive=True)
    _num(c, "cell", "core_diameter_m", positive=True)
    if c["mode_area_m2"] is not None:
        _num(c, "cell", "mode_area_m2", positive=True)
    _num(c, "cell", "density_m3", positive=True)

    an = resolved["anchors"]
    _num(an, "anchors", "phase_target_rad", positive=True)
    _num(an, "anchors", "p_sig_w", positive=True)
    _num(an, "anchors", "p_met_w", nonneg=True)
    pa = _num(an, "anchors", "peak_absorption", positive=True)
    if pa >= 1.0:
        raise ConfigError("must be < 1", field="anchors.peak_absorption")

    sp = resolved["saturation_powers"]
    for point in ("max_phase", "detuned_minus_35MHz"):
        sec = sp[point]
        _num(sec, f"saturation_powers.{point}", "phase_w", positive=True)
        _num(sec, f"saturation_powers.{point}", "abs_w", positive=True)

    d = resolved["detection"]
    _num(d, "detection", "offset_freq_hz", positive=True)
    _num(d, "detection", "quantum_efficiency", positive=True, upper=1.0)
    _num(d, "detection", "sample_rate_hz", positive=True)
    _num(d, "detection", "duration_s", positive=True)
    _num(d, "detection", "time_constant_s", positive=True)
    _num(d, "detection", "wavelength_m", positive=True)
    if d["sample_rate_hz"] <= 2.0 * d["offset_freq_hz"]:
        raise ConfigError("must exceed twice offset_freq_hz",
                          field="detection.sample_rate_hz")

    s = resolved["scan"]
    _int(s, "scan", "n_points", minimum=2)
    _num(s, "scan", "half_span_hz", positive=True)
    _num(s, "scan", "p_met_w", nonneg=True)
    _num(s, "scan", "p_sig_w", nonneg=True)
    if not isinstance(s["noise"], bool):
        raise ConfigError("must be true or false", field="scan.noise")
    _int(s, "scan", "n_seeds", minimum=1)
    _operating_point(s, "scan")

    for name in ("signal_sweep", "meter_sweep"):
        sw = resolved[name]
        if sw["values_w"] is not None:
            vals = _num_list(sw, name, "values_w", positive=True, min_len=3)
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("must be strictly increasing",
                                  field=f"{name}.values_w")
        fixed_key = "fixed_p_met_w" if name == "signal_sweep" else "fixed_p_sig_w"
        _num(sw, name, fixed_key, nonneg=True)
        _operating_point(sw, name)

    n = resolved["noise"]
    _num_list(n, "noise", "p_met_values_w", positive=True, min_len=1)
    _int(n, "noise", "n_trials", minimum=2)
    _num(n, "noise", "injected_phase_rad", nonneg=True)

    de = resolved["design"]
    for key in ("core_factor", "density_factor", "length_factor", "qe_new",
                "baseline_phi_ph"):
        _num(de, "design", key, positive=True)


def config_from_dict(raw: dict) -> RunConfig:
    """Resolve a raw JSON-like dict against the schema and validate it."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    _reject_unknown(raw, _SCHEMA, "")
    resolved: dict = {}
    for key, default in _SCHEMA.items():
        if key == "saturation_powers":
            given = raw.get(key, {})
            if not isinstance(given, dict):
                raise ConfigError("must be an object", field=key)
            _reject_unknown(given, default, key)
            resolved[key] = {
                point: _merge_section_nested(key, point, given.get(point, {}))
                for point in default
            }
        elif isinstance(default, dict):
            resolved[key] = _merge_section(key, raw.get(key, {}))
        else:
            resolved[key] = raw.get(key, default)
    if isinstance(resolved["seed"], bool) or not isinstance(resolved["seed"], int):
        raise ConfigError("must be an integer", field="seed")
    if not (0 <= resolved["seed"] < 2 ** 64):
        raise ConfigError("must fit in 64 unsigned bits", field="seed")
    if not isinstance(resolved["out_dir"], str) or not resolved["out_dir"]:
        raise ConfigError("must be a non-empty string", field="out_dir")
    _validate(resolved)

    # cross-checks that need the built objects (e.g. Nyquist, grid rules)
    cfg = RunConfig(resolved=resolved)
    try:
        cfg.bundle()
        cfg.scan_config()
        cfg.signal_sweep_config()
        cfg.meter_sweep_config()
        cfg.design_params()
    except DomainError as e:
        raise ConfigError(str(e)) from e
    return cfg


def _merge_section_nested(section: str, sub: str, given: dict) -> dict:
    defaults = _SCHEMA[section][sub]
    if not isinstance(given, dict):
        raise ConfigError("must be an object", field=f"{section}.{sub}")
    _reject_unknown(given, defaults, f"{section}.{sub}")
    return {k: given.get(k, v) for k, v in defaults.items()}


def parse_config(path) -> RunConfig:
    """Load, resolve and validate a JSON config file.

    Raises FileNotFoundError, json.JSONDecodeError or ConfigError; the
    command line maps these to exit codes 2, 3 and 4.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return config_from_dict(raw)
