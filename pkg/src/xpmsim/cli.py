"""Command-line front end.

    xpmsim <subcommand> --config <path> [--out <dir>] [--seed <u64>]
                        [--noise on|off] [--input <csv>]

Subcommands: spectrum, sweep-signal, sweep-meter, noise, fit, calibrate,
extrapolate.  Every run writes a CSV (where applicable) plus a JSON
manifest carrying the config hash, seeds, calibration id and package
version; outputs are written to a temporary file and atomically renamed,
so no partial files survive a failure.  Numeric CSV fields use 17
significant digits and every file embeds the config hash, which makes
re-runs byte-identical.

Exit codes: 0 success, 1 pipeline error, 2 missing file or unknown
subcommand, 3 malformed JSON, 4 config invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .config import RunConfig, config_from_dict, parse_config
from .errors import ConfigError, DomainError
from .fitting import confidence_interval, dispersion_profile_model, least_squares_fit
from .kerr import dispersion_reference
from .harness import (
    SweepResult,
    detection_improvement,
    extrapolate_design,
    run_meter_sweep,
    run_noise_characterization,
    run_signal_sweep,
    run_spectrum_scan,
)

__all__ = ["main"]

_SUBCOMMANDS = ("spectrum", "sweep-signal", "sweep-meter", "noise", "fit",
                "calibrate", "extrapolate")


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".xpmsim-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(config_hash: str, header: list[str],
              columns: list[np.ndarray]) -> str:
    lines = [f"# config_hash={config_hash}", ",".join(header)]
    n = len(columns[0])
    for i in range(n):
        lines.append(",".join(f"{float(col[i]):.17g}" for col in columns))
    return "\n".join(lines) + "\n"


def _write_manifest(out_dir: str, name: str, cfg: RunConfig,
                    extra: dict) -> None:
    doc = {
        "tool": "xpmsim",
        "version": __version__,
        "subcommand": name,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    doc.update(extra)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    _atomic_write(os.path.join(out_dir, f"{name}_manifest.json"), text)


def _cmd_spectrum(cfg: RunConfig, out_dir: str, noise: bool | None) -> int:
    bundle = cfg.bundle()
    scan = cfg.scan_config(noise=noise)
    spec = run_spectrum_scan(scan, bundle, cfg.scan_operating_point())
    path = os.path.join(out_dir, "spectrum.csv")
    _atomic_write(path, _csv_text(
        cfg.config_hash,
        ["detuning_rad_s", "phase_rad", "transmission", "ci_halfwidth_rad"],
        [spec.detunings, spec.phase, spec.transmission,
         np.zeros(len(spec))],
    ))
    cal = bundle.calibration_for(cfg.scan_operating_point())
    _write_manifest(out_dir, "spectrum", cfg, {
        "calibration_id": cal.calibration_id,
        "seeds": list(scan.seeds),
        "noise": scan.include_detection_noise,
        "n_points": len(spec),
    })
    peak = float(np.max(np.abs(spec.phase)))
    print(f"spectrum: {len(spec)} points, peak |phase| {peak:.6g} rad -> {path}")
    return 0


def _sweep_csv(out_dir: str, name: str, axis_header: str, cfg: RunConfig,
               result: SweepResult) -> str:
    path = os.path.join(out_dir, f"{name}.csv")
    _atomic_write(path, _csv_text(
        cfg.config_hash,
        [axis_header, "phase_rad", "transmission", "ci_halfwidth_rad"],
        [result.axis_values, result.phase, np.exp(-result.absorption),
         result.ci_halfwidths],
    ))
    return path


def _cmd_sweep_signal(cfg: RunConfig, out_dir: str) -> int:
    bundle = cfg.bundle()
    result = run_signal_sweep(cfg.signal_sweep_config(), bundle)
    path = _sweep_csv(out_dir, "sweep_signal", "p_sig_w", cfg, result)
    _write_manifest(out_dir, "sweep_signal", cfg, {"result": result.metadata})
    slope = result.metadata["loglog_slope"]
    print(f"sweep-signal: log-log slope {slope:.6f} -> {path}")
    return 0


def _cmd_sweep_meter(cfg: RunConfig, out_dir: str) -> int:
    bundle = cfg.bundle()
    result = run_meter_sweep(cfg.meter_sweep_config(), bundle)
    path = _sweep_csv(out_dir, "sweep_meter", "p_met_w", cfg, result)
    _write_manifest(out_dir, "sweep_meter", cfg, {"result": result.metadata})
    print(f"sweep-meter: fitted P_sat {result.metadata['fitted_p_sat_phase_w']:.4g} W "
          f"(phase), {result.metadata['fitted_p_sat_abs_w']:.4g} W (absorption) -> {path}")
    return 0


def _cmd_noise(cfg: RunConfig, out_dir: str) -> int:
    bundle = cfg.bundle()
    p_values, n_trials, injected = cfg.noise_params()
    table = run_noise_characterization(p_values, bundle, n_trials=n_trials,
                                       seed=cfg.seed, injected_phase=injected)
    path = os.path.join(out_dir, "noise.csv")
    _atomic_write(path, _csv_text(
        cfg.config_hash,
        ["p_met_w", "mc_std_rad", "predicted_std_rad",
         "reported_floor_rad_rthz", "first_principles_floor_rad_rthz"],
        [table.p_met_values, table.mc_std, table.predicted_std,
         table.reported_floor, table.first_principles_floor],
    ))
    _write_manifest(out_dir, "noise", cfg, {
        "exponent": table.exponent,
        "exponent_ci": table.exponent_ci,
        "n_trials": table.n_trials,
        "floor_ratio_at_1uW": float(
            np.interp(1e-6, table.p_met_values, table.floor_ratio)),
    })
    print(f"noise: std ~ P^{table.exponent:.3f} over "
          f"{table.p_met_values.size} powers -> {path}")
    return 0


def _cmd_calibrate(cfg: RunConfig, out_dir: str) -> int:
    bundle = cfg.bundle()
    cal = bundle.calibration_for("max_phase")
    from .harness import _detuned_to_max_ratio
    from .kerr import BeamPowers
    anchors = cfg.anchors()
    ratio = _detuned_to_max_ratio(
        BeamPowers(p_met=anchors.p_met, p_sig=anchors.p_sig), bundle)
    doc = {
        "calibration": cal.to_dict(),
        "calibration_id": cal.calibration_id,
        "config_hash": cfg.config_hash,
        # diagnostic only: ratio of detuned-point phase to peak phase;
        # strongly lineshape-dependent, so recorded rather than asserted
        "detuned_to_max_phase_ratio": ratio,
    }
    path = os.path.join(out_dir, "calibration.json")
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    _write_manifest(out_dir, "calibrate", cfg, {
        "calibration_id": cal.calibration_id,
        "detuned_to_max_phase_ratio": ratio,
    })
    print(f"calibrate: coupling {cal.coupling_c:.10g}, peak OD "
          f"{cal.peak_od:.10g}, id {cal.calibration_id} -> {path}")
    return 0


def _cmd_extrapolate(cfg: RunConfig, out_dir: str) -> int:
    params = cfg.design_params()
    phi = extrapolate_design(params)
    gain = detection_improvement(params,
                                 qe_old=cfg.resolved["detection"]["quantum_efficiency"])
    _write_manifest(out_dir, "extrapolate", cfg, {
        "phi_per_photon_rad": phi,
        "detection_improvement": gain,
    })
    print(f"extrapolate: {phi:.3g} rad/photon "
          f"(noise floor improves {gain:.3g}x with the better detector)")
    return 0


def _read_spectrum_csv(path: str) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line[0] not in "0123456789+-.":
                continue  # header row
            parts = line.split(",")
            if len(parts) < 2:
                raise DomainError(f"bad CSV row in {path!r}: {line!r}")
            rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 3:
        raise DomainError(f"{path!r} holds fewer than three data rows")
    arr = np.asarray(rows)
    return arr[:, 0], arr[:, 1]


def _cmd_fit(cfg: RunConfig, out_dir: str, input_path: str | None) -> int:
    if input_path is None:
        raise DomainError("fit requires --input <spectrum csv>")
    detuning, phase = _read_spectrum_csv(input_path)
    manifold = cfg.manifold()
    lineshape = cfg.lineshape()
    model = dispersion_profile_model(manifold, lineshape)
    # align the profile extremum with the grid extremum, then displace the
    # start by one grid cell: every p0 component must be nonzero so the
    # differencer has a step scale
    i_peak = int(np.argmax(np.abs(phase)))
    scale0 = float(phase[i_peak])
    delta_ext = dispersion_reference(manifold, lineshape)[0]
    spacing = float(detuning[1] - detuning[0])
    p0 = (scale0, float(detuning[i_peak]) - delta_ext + spacing,
          1e-3 * abs(scale0))
    result = least_squares_fit(model, detuning, phase, p0)
    if not result.converged:
        raise DomainError(f"dispersion fit did not converge: {result.message}")
    ci = confidence_interval(result, 0)
    doc = {
        "params": {
            "extremal_phase_rad": float(result.params[0]),
            "center_rad_s": float(result.params[1]),
            "offset_rad": float(result.params[2]),
        },
        "extremal_phase_ci95_rad": list(ci),
        "cost": result.cost,
        "converged": result.converged,
        "n_iterations": result.n_iterations,
        "message": result.message,
        "config_hash": cfg.config_hash,
        "input": os.path.basename(input_path),
    }
    path = os.path.join(out_dir, "fit.json")
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")
    _write_manifest(out_dir, "fit", cfg, {"fit": doc})
    print(f"fit: extremal phase {result.params[0]:.9g} rad "
          f"({result.message}) -> {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="xpmsim",
        description="Cross-phase modulation simulation pipelines",
    )
    parser.add_argument("subcommand", choices=_SUBCOMMANDS)
    parser.add_argument("--config", default=None,
                        help="JSON config file (defaults apply if omitted)")
    parser.add_argument("--out", default=None,
                        help="output directory (default from config)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--noise", choices=("on", "off"), default=None,
                        help="override detection noise for spectrum scans")
    parser.add_argument("--input", default=None,
                        help="input CSV for the fit subcommand")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = parse_config(args.config) if args.config else config_from_dict({})
        if args.seed is not None:
            raw = cfg.to_dict()
            raw["seed"] = args.seed
            cfg = config_from_dict(raw)
    except FileNotFoundError as e:
        print(f"xpmsim: config file not found: {e.filename}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as e:
        print(f"xpmsim: malformed JSON in config: {e}", file=sys.stderr)
        return 3
    except ConfigError as e:
        print(f"xpmsim: invalid config: {e}", file=sys.stderr)
        return 4

    out_dir = args.out if args.out is not None else cfg.out_dir
    noise = None if args.noise is None else (args.noise == "on")
    try:
        os.makedirs(out_dir, exist_ok=True)
        if args.subcommand == "spectrum":
            return _cmd_spectrum(cfg, out_dir, noise)
        if args.subcommand == "sweep-signal":
            return _cmd_sweep_signal(cfg, out_dir)
        if args.subcommand == "sweep-meter":
            return _cmd_sweep_meter(cfg, out_dir)
        if args.subcommand == "noise":
            return _cmd_noise(cfg, out_dir)
        if args.subcommand == "calibrate":
            return _cmd_calibrate(cfg, out_dir)
        if args.subcommand == "extrapolate":
            return _cmd_extrapolate(cfg, out_dir)
        if args.subcommand == "fit":
            return _cmd_fit(cfg, out_dir, args.input)
        raise AssertionError("unreachable")
    except FileNotFoundError as e:
        print(f"xpmsim: file not found: {e.filename}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"xpmsim: {args.subcommand} failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
