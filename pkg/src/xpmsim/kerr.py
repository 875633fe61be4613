"""Cross-Kerr observables of the fibre-coupled vapour.

The signal beam imprints a phase on the meter through the two-photon
nonlinearity.  With the manifold dispersion normalised to its extremal
value, the meter phase is

    phi = (2/3) * C * L * k_met * (P_sig/A) * Re_hat[chi](delta_e)
          * 1/(1 + P_met/P_sat)

and the meter transmission

    T = exp(-od_peak * Im_hat[chi](delta_e) / (1 + P_met/P_sat_abs))

where C and od_peak lump every absolute atomic quantity and are fixed by
two calibration anchors: a pi phase shift at (P_sig, P_met) = (25 uW, 1 uW)
at the dispersion extremum, and 70% peak absorption in the unsaturated
limit.  Saturation powers are configurable per operating point.

Derived per-photon and per-atom figures:

    phi_photon = phi * hbar * omega_sig * gamma_i / P_sig
    phi_atom   = phi / (rho * L * A)
    n2         = 3 * phi * A / (2 * L * k_met * P_sig)
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.constants import k as _k_boltzmann

from .atomic import (
    AtomicConstants,
    HyperfineManifold,
    LineshapeParams,
    manifold_susceptibility,
)
from .errors import CalibrationError, DomainError

__all__ = [
    "FiberCell",
    "BeamPowers",
    "KerrCalibration",
    "CalibrationAnchors",
    "PhaseAbsorptionSpectrum",
    "saturation_factor",
    "dispersion_reference",
    "absorption_reference",
    "normalized_dispersion",
    "normalized_absorption",
    "meter_phase_shift",
    "transmission",
    "phase_per_photon",
    "phase_per_atom",
    "n2_from_phase",
    "ratio_spectrum",
    "calibrate",
    "vapor_density",
]


@dataclass(frozen=True)
class FiberCell:
    """Geometry and density of the vapour-filled hollow-core section."""

    length: float = 0.20               # interaction length, m (half of a 40 cm fibre filled)
    core_diameter: float = 45e-6       # hollow-core diameter, m
    mode_area: float | None = None     # effective area, m^2; pi*(d/2)^2 when None
    # Number density, m^-3.  Default reproduces the implied interacting atom
    # number rho*L*A ~ 1.24e9; same order as the saturated vapour density at
    # the ~110 C operating temperature (see vapor_density).
    density_rho: float = 3.9e18

    def __post_init__(self) -> None:
        if not (math.isfinite(self.length) and self.length > 0):
            raise DomainError("length must be positive")
        if not (math.isfinite(self.core_diameter) and self.core_diameter > 0):
            raise DomainError("core_diameter must be positive")
        if self.mode_area is None:
            object.__setattr__(
                self, "mode_area", math.pi * (self.core_diameter / 2.0) ** 2
            )
        if not (math.isfinite(self.mode_area) and self.mode_area > 0):
            raise DomainError("mode_area must be positive")
        if not (math.isfinite(self.density_rho) and self.density_rho > 0):
            raise DomainError("density_rho must be positive")

    @property
    def atom_number(self) -> float:
        """Interacting atom number rho*L*A."""
        return self.density_rho * self.length * self.mode_area


@dataclass(frozen=True)
class BeamPowers:
    """Optical powers at the atoms."""

    p_met: float   # meter power, W
    p_sig: float   # signal power, W

    def __post_init__(self) -> None:
        for name in ("p_met", "p_sig"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise DomainError(f"{name} must be non-negative and finite")


@dataclass(frozen=True)
class KerrCalibration:
    """Lumped coupling constants fixed by the calibration anchors."""

    coupling_c: float    # dispersion coupling, absorbs all absolute atomic factors
    peak_od: float       # unsaturated optical depth at the absorption maximum
    p_sat_phase: float   # phase saturation power at this operating point, W
    p_sat_abs: float     # absorption saturation power at this operating point, W

    def __post_init__(self) -> None:
        for name in ("coupling_c", "peak_od", "p_sat_phase", "p_sat_abs"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite")

    def to_dict(self) -> dict:
        return {
            "coupling_c": self.coupling_c,
            "peak_od": self.peak_od,
            "p_sat_phase_w": self.p_sat_phase,
            "p_sat_abs_w": self.p_sat_abs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KerrCalibration":
        known = {"coupling_c", "peak_od", "p_sat_phase_w", "p_sat_abs_w"}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown calibration fields: {sorted(unknown)}")
        try:
            return cls(
                coupling_c=float(d["coupling_c"]),
                peak_od=float(d["peak_od"]),
                p_sat_phase=float(d["p_sat_phase_w"]),
                p_sat_abs=float(d["p_sat_abs_w"]),
            )
        except KeyError as e:
            raise DomainError(f"missing calibration field: {e.args[0]}") from e

    @property
    def calibration_id(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:12]

    def with_saturation(self, p_sat_phase: float, p_sat_abs: float) -> "KerrCalibration":
        """Same anchors, different operating-point saturation powers."""
        return replace(self, p_sat_phase=p_sat_phase, p_sat_abs=p_sat_abs)


@dataclass(frozen=True)
class CalibrationAnchors:
    """Observed end points that pin the lumped constants."""

    phase_target: float = math.pi      # |phi| at the anchor powers, rad
    p_sig: float = 25e-6               # anchor signal power, W
    p_met: float = 1e-6                # anchor meter power, W
    peak_absorption: float = 0.70      # unsaturated peak absorption, dimensionless
    p_sat_phase: float = 3e-6          # phase saturation power at the anchor point, W
    p_sat_abs: float = 3e-6            # absorption saturation power at the anchor point, W


@dataclass(frozen=True)
class PhaseAbsorptionSpectrum:
    """Phase, transmission and their ratio over a detuning grid."""

    detunings: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    transmission: np.ndarray = field(repr=False)
    ratio: np.ndarray | None = field(repr=False, default=None)

    def __post_init__(self) -> None:
        d = np.asarray(self.detunings, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        tr = np.asarray(self.transmission, dtype=float)
        if d.ndim != 1 or d.size < 2 or not np.all(np.diff(d) > 0):
            raise DomainError("detunings must be strictly increasing with >= 2 points")
        for name, a in (("phase", ph), ("transmission", tr)):
            if a.shape != d.shape:
                raise DomainError(f"{name} must match the detuning grid")
        if not (np.all(tr > 0) and np.all(tr <= 1)):
            raise DomainError("transmission must lie in (0, 1]")
        if self.ratio is None:
            absorb = -np.log(tr)
            ra = np.full(d.shape, np.nan)
            ok = absorb >= 1e-6
            ra[ok] = ph[ok] / absorb[ok]
        else:
            ra = np.asarray(self.ratio, dtype=float)
            if ra.shape != d.shape:
                raise DomainError("ratio must match the detuning grid")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "phase", ph)
        object.__setattr__(self, "transmission", tr)
        object.__setattr__(self, "ratio", ra)

    def __len__(self) -> int:
        return int(self.detunings.size)


def saturation_factor(p_met: float, p_sat: float) -> float:
    """Meter-power saturation 1/(1 + P_met/P_sat)."""
    if not (math.isfinite(p_met) and p_met >= 0):
        raise DomainError("p_met must be non-negative and finite")
    if not (math.isfinite(p_sat) and p_sat > 0):
        raise DomainError("p_sat must be positive and finite")
    return 1.0 / (1.0 + p_met / p_sat)


@lru_cache(maxsize=32)
def dispersion_reference(manifold: HyperfineManifold,
                         params: LineshapeParams) -> tuple[float, float]:
    """(detuning, value) of the extremum of Re chi, refined parabolically.

    The signed extremal value defines the dispersion normalisation, so the
    normalised dispersion equals +1 at the extremum by construction.
    """
    pad = 10.0 * (params.gamma_l + params.sigma_g)
    lo = min(manifold.offsets) - pad
    hi = max(manifold.offsets) + pad
    grid = np.linspace(lo, hi, 30001)
    re = manifold_susceptibility(grid, manifold, params).real
    i = int(np.argmax(np.abs(re)))
    if 0 < i < grid.size - 1:
        # parabolic vertex through the three neighbouring |Re|^2 samples
        y0, y1, y2 = re[i - 1] ** 2, re[i] ** 2, re[i + 1] ** 2
        denom = y0 - 2.0 * y1 + y2
        if denom != 0.0:
            h = grid[1] - grid[0]
            x = grid[i] + 0.5 * h * (y0 - y2) / denom
            return float(x), float(manifold_susceptibility(float(x), manifold, params).real)
    return float(grid[i]), float(re[i])


@lru_cache(maxsize=32)
def absorption_reference(manifold: HyperfineManifold,
                         params: LineshapeParams) -> tuple[float, float]:
    """(detuning, value) of the maximum of Im chi."""
    pad = 10.0 * (params.gamma_l + params.sigma_g)
    lo = min(manifold.offsets) - pad
    hi = max(manifold.offsets) + pad
    grid = np.linspace(lo, hi, 30001)
    im = manifold_susceptibility(grid, manifold, params).imag
    i = int(np.argmax(im))
    if 0 < i < grid.size - 1:
        y0, y1, y2 = im[i - 1], im[i], im[i + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom != 0.0:
            h = grid[1] - grid[0]
            x = grid[i] + 0.5 * h * (y0 - y2) / denom
            return float(x), float(manifold_susceptibility(float(x), manifold, params).imag)
    return float(grid[i]), float(im[i])


def normalized_dispersion(delta_e, manifold: HyperfineManifold,
                          params: LineshapeParams):
    """Re chi divided by its signed extremal value (+1 at the extremum)."""
    _, ref = dispersion_reference(manifold, params)
    chi = manifold_susceptibility(delta_e, manifold, params)
    return np.real(chi) / ref if np.ndim(delta_e) else chi.real / ref


def normalized_absorption(delta_e, manifold: HyperfineManifold,
                          params: LineshapeParams):
    """Im chi divided by its maximum (in (0, 1])."""
    _, ref = absorption_reference(manifold, params)
    chi = manifold_susceptibility(delta_e, manifold, params)
    return np.imag(chi) / ref if np.ndim(delta_e) else chi.imag / ref


def meter_phase_shift(cell: FiberCell, powers: BeamPowers, delta_e,
                      cal: KerrCalibration, manifold: HyperfineManifold,
                      params: LineshapeParams,
                      consts: AtomicConstants = AtomicConstants()):
    """Meter phase shift, rad; exactly linear in P_sig, saturating in P_met."""
    d_hat = normalized_dispersion(delta_e, manifold, params)
    sat = saturation_factor(powers.p_met, cal.p_sat_phase)
    scale = (2.0 / 3.0) * cal.coupling_c * cell.length * consts.k_met \
        * (powers.p_sig / cell.mode_area)
    return scale * d_hat * sat


def transmission(cell: FiberCell, powers: BeamPowers, delta_e,
                 cal: KerrCalibration, manifold: HyperfineManifold,
                 params: LineshapeParams):
    """Meter power transmission in (0, 1]; independent of signal power."""
    i_hat = normalized_absorption(delta_e, manifold, params)
    sat = saturation_factor(powers.p_met, cal.p_sat_abs)
    return np.exp(-cal.peak_od * i_hat * sat)


def phase_per_photon(phi_met: float, p_sig: float,
                     consts: AtomicConstants = AtomicConstants()) -> float:
    """Phase per signal photon, phi * hbar * omega_sig * gamma_i / P_sig."""
    if not (math.isfinite(p_sig) and p_sig > 0):
        raise DomainError("p_sig must be positive")
    if not math.isfinite(phi_met):
        raise DomainError("phi_met must be finite")
    return phi_met * consts.hbar * consts.omega_sig * consts.gamma_i / p_sig


def phase_per_atom(phi_met: float, cell: FiberCell) -> float:
    """Phase per interacting atom, phi / (rho * L * A)."""
    if not math.isfinite(phi_met):
        raise DomainError("phi_met must be finite")
    return phi_met / cell.atom_number


def n2_from_phase(phi_met: float, cell: FiberCell, p_sig: float,
                  consts: AtomicConstants = AtomicConstants()) -> float:
    """Nonlinear index n2 in m^2/W inverted from the phase formula."""
    if not (math.isfinite(p_sig) and p_sig > 0):
        raise DomainError("p_sig must be positive")
    if not math.isfinite(phi_met):
        raise DomainError("phi_met must be finite")
    return 3.0 * phi_met * cell.mode_area / (2.0 * cell.length * consts.k_met * p_sig)


def ratio_spectrum(spectrum: PhaseAbsorptionSpectrum,
                   floor: float = 1e-6) -> np.ndarray:
    """Phase per unit -ln(transmission); NaN where absorption is below floor."""
    absorb = -np.log(spectrum.transmission)
    out = np.full(absorb.shape, np.nan)
    ok = absorb >= floor
    out[ok] = spectrum.phase[ok] / absorb[ok]
    return out


def calibrate(anchors: CalibrationAnchors, cell: FiberCell,
              consts: AtomicConstants = AtomicConstants()) -> KerrCalibration:
    """Fix coupling_c and peak_od from the two anchor observations.

    The phase anchor is taken at the dispersion extremum where the
    normalised dispersion is one, so no lineshape enters here.
    """
    if not (math.isfinite(anchors.phase_target) and anchors.phase_target > 0):
        raise CalibrationError("phase_target must be positive")
    if not (math.isfinite(anchors.p_sig) and anchors.p_sig > 0):
        raise CalibrationError("anchor p_sig must be positive")
    if not (math.isfinite(anchors.p_met) and anchors.p_met >= 0):
        raise CalibrationError("anchor p_met must be non-negative")
    if not (0.0 < anchors.peak_absorption < 1.0):
        raise CalibrationError("peak_absorption must lie in (0, 1)")
    if not (math.isfinite(anchors.p_sat_phase) and anchors.p_sat_phase > 0):
        raise CalibrationError("p_sat_phase must be positive")
    if not (math.isfinite(anchors.p_sat_abs) and anchors.p_sat_abs > 0):
        raise CalibrationError("p_sat_abs must be positive")
    sat = saturation_factor(anchors.p_met, anchors.p_sat_phase)
    coupling = anchors.phase_target / (
        (2.0 / 3.0) * cell.length * consts.k_met
        * (anchors.p_sig / cell.mode_area) * sat
    )
    peak_od = -math.log(1.0 - anchors.peak_absorption)
    return KerrCalibration(
        coupling_c=coupling,
        peak_od=peak_od,
        p_sat_phase=anchors.p_sat_phase,
        p_sat_abs=anchors.p_sat_abs,
    )


def vapor_density(temperature_k: float, isotope_fraction: float = 0.7217) -> float:
    """Saturated Rb vapour density, m^-3, times the isotope fraction.

    Liquid-phase vapour pressure correlation of Alcock, Itkin and Horrigan
    (Can. Metall. Q. 23, 309 (1984)):

        log10 P[torr] = 15.88253 - 4529.635/T + 0.00058663*T - 2.99138*log10 T

    Not used by any calibrated quantity; provided to relate the configured
    density to an operating temperature.
    """
    if not (math.isfinite(temperature_k) and temperature_k > 0):
        raise DomainError("temperature must be positive")
    if not (0.0 < isotope_fraction <= 1.0):
        raise DomainError("isotope_fraction must lie in (0, 1]")
    log10_p_torr = (15.88253 - 4529.635 / temperature_k
                    + 0.00058663 * temperature_k
                    - 2.99138 * math.log10(temperature_k))
    p_pa = 133.322368 * 10.0 ** log10_p_torr
    return isotope_fraction * p_pa / (_k_boltzmann * temperature_k)
