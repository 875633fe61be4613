"""Atomic lineshape model for the two-photon 5S -> 5D ladder in rubidium.

The meter beam (780 nm) and signal beam (776 nm) connect 5S1/2 F=3 to the
5D5/2 manifold of 85Rb through the far-detuned 5P3/2 level.  Everything the
Kerr engine needs from atomic physics is the complex, unit-normalised
two-photon susceptibility

    chi(delta) = sum_k s_k * V(delta - o_k)

where V is a complex Voigt profile (Lorentzian of half width gamma_L
convolved with a Gaussian of standard deviation sigma_G), o_k are the
hyperfine component offsets and s_k their normalised strengths.  The
normalisation convention is peak-imaginary-equals-one per unit strength in
the pure Lorentzian limit:

    V(delta) = gamma_L / (delta - i*gamma_L)          (sigma_G = 0)

so Im V is the absorption profile (even, positive, Im V(0) = 1) and Re V the
dispersion profile (odd).  All absolute scaling is deferred to the Kerr
calibration.

Angular frequencies throughout, in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as _c_light
from scipy.constants import hbar as _hbar
from scipy.special import wofz

from .errors import DomainError

TWO_PI = 2.0 * math.pi

__all__ = [
    "AtomicConstants",
    "HyperfineManifold",
    "LineshapeParams",
    "ComplexSpectrum",
    "complex_voigt",
    "manifold_susceptibility",
    "spectrum_grid",
    "default_manifold",
    "default_lineshape",
]


@dataclass(frozen=True)
class AtomicConstants:
    """Fixed atomic and optical constants of the two-photon ladder."""

    lambda_met: float = 780e-9        # meter wavelength, m (5S1/2 -> 5P3/2)
    lambda_sig: float = 776e-9        # signal wavelength, m (5P3/2 -> 5D5/2)
    # 5P3/2 natural linewidth, 2*pi*6.07 MHz (Volz & Schmoranzer 1996, as
    # tabulated in Steck, "Rubidium 85 D Line Data").
    gamma_i: float = TWO_PI * 6.07e6
    gamma_e: float = TWO_PI * 10e6    # two-photon linewidth scale, rad/s
    delta_i: float = TWO_PI * 1.2e9   # detuning from the intermediate 5P3/2, rad/s
    hbar: float = _hbar
    c: float = _c_light

    def __post_init__(self) -> None:
        for name in ("lambda_met", "lambda_sig", "gamma_i", "gamma_e",
                     "delta_i", "hbar", "c"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def k_met(self) -> float:
        """Meter vacuum wavenumber 2*pi/lambda_met, rad/m."""
        return TWO_PI / self.lambda_met

    @property
    def omega_sig(self) -> float:
        """Signal angular frequency 2*pi*c/lambda_sig, rad/s."""
        return TWO_PI * self.c / self.lambda_sig


# 85Rb 5D5/2 hyperfine shifts for F' = 1..5, computed from the magnetic
# dipole and electric quadrupole constants A = -2.1911 MHz, B = 2.680 MHz
# (F. Nez et al., Opt. Commun. 102, 432 (1993)), relative to the 5D5/2
# centroid.  Negative A puts F'=5 lowest; the manifold spans ~32 MHz.
_DEFAULT_OFFSETS_HZ = (
    18.21385e6,   # F' = 1
    12.78645e6,   # F' = 2
    5.24833e6,    # F' = 3
    -3.67694e6,   # F' = 4
    -13.02444e6,  # F' = 5
)
# Approximate relative strengths of the F=3 -> F' two-photon lines, read
# from published 5S-5D spectra (Nez et al. 1993; Grove et al., Phys. Scr.
# 52, 271 (1995)).  F'=5 dominates; exact values are configurable and
# nothing downstream depends on them beyond span and asymmetry.
_DEFAULT_STRENGTHS = (0.03, 0.12, 0.30, 0.60, 1.00)


@dataclass(frozen=True)
class HyperfineManifold:
    """Hyperfine components of the upper level as (offset, strength) pairs.

    Offsets are angular frequencies relative to the manifold reference;
    strengths are normalised to sum to one on construction.
    """

    offsets: tuple[float, ...]
    strengths: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.offsets) == 0:
            raise DomainError("manifold must contain at least one component")
        if len(self.offsets) != len(self.strengths):
            raise DomainError("offsets and strengths must have equal length")
        for o in self.offsets:
            if not math.isfinite(o):
                raise DomainError("component offsets must be finite")
        for s in self.strengths:
            if not (math.isfinite(s) and s > 0):
                raise DomainError("component strengths must be positive and finite")
        total = sum(self.strengths)
        object.__setattr__(
            self, "strengths", tuple(s / total for s in self.strengths)
        )

    @property
    def span(self) -> float:
        """Width of the manifold, max(offset) - min(offset), rad/s."""
        return max(self.offsets) - min(self.offsets)


def default_manifold() -> HyperfineManifold:
    """Five-component F' = 1..5 manifold of 85Rb 5D5/2 (see table above)."""
    return HyperfineManifold(
        offsets=tuple(TWO_PI * f for f in _DEFAULT_OFFSETS_HZ),
        strengths=_DEFAULT_STRENGTHS,
    )


@dataclass(frozen=True)
class LineshapeParams:
    """Voigt component widths: Lorentzian HWHM and Gaussian standard deviation."""

    gamma_l: float   # Lorentzian half width at half maximum, rad/s
    sigma_g: float   # Gaussian standard deviation, rad/s (0 for pure Lorentzian)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.gamma_l) and self.gamma_l > 0):
            raise DomainError("gamma_l must be positive and finite")
        if not (math.isfinite(self.sigma_g) and self.sigma_g >= 0):
            raise DomainError("sigma_g must be non-negative and finite")


def default_lineshape() -> LineshapeParams:
    """Widths giving a combined Voigt FWHM of 2*pi*10 MHz.

    The Lorentzian half width is fixed at 2*pi*3 MHz; the Gaussian sigma of
    2*pi*2.6294 MHz makes up the remainder (Olivero-Longbothum inversion,
    verified numerically to 0.01%).
    """
    return LineshapeParams(gamma_l=TWO_PI * 3e6, sigma_g=TWO_PI * 2.6294e6)


@dataclass(frozen=True)
class ComplexSpectrum:
    """Complex susceptibility sampled on a strictly increasing detuning grid."""

    detunings: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        d = np.asarray(self.detunings, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if d.ndim != 1 or d.size < 2:
            raise DomainError("detuning grid must be one-dimensional with >= 2 points")
        if v.shape != d.shape:
            raise DomainError("values must match the detuning grid in shape")
        if not np.all(np.isfinite(d)):
            raise DomainError("detunings must be finite")
        if not np.all(np.diff(d) > 0):
            raise DomainError("detuning grid must be strictly increasing")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.detunings.size)


_SQRT2 = math.sqrt(2.0)
_PEAK_FACTOR = math.sqrt(math.pi / 2.0)


def complex_voigt(delta, params: LineshapeParams):
    """Complex Voigt profile at detuning ``delta`` (scalar or array), rad/s.

    Evaluated through the Faddeeva function w(z) with
    z = (delta + i*gamma_l)/(sigma_g*sqrt(2)):

        V = gamma_l*sqrt(pi/2)/sigma_g * (Im w + i Re w)

    which is the unit-peak Lorentzian convolved with a unit-area Gaussian.
    The pure Lorentzian gamma_l/(delta - i*gamma_l) is used when sigma_g = 0.
    """
    d = np.asarray(delta, dtype=float)
    if not np.all(np.isfinite(d)):
        raise DomainError("detuning must be finite")
    # below sigma_g/gamma_l ~ 1e-7 the Gaussian is invisible at float64 and
    # the Faddeeva argument can overflow, so take the Lorentzian limit
    if params.sigma_g <= 1e-7 * params.gamma_l:
        out = params.gamma_l / (d - 1j * params.gamma_l)
    else:
        z = (d + 1j * params.gamma_l) / (params.sigma_g * _SQRT2)
        w = wofz(z)
        out = (params.gamma_l * _PEAK_FACTOR / params.sigma_g) * (w.imag + 1j * w.real)
    if np.ndim(delta) == 0:
        return complex(out)
    return out


def manifold_susceptibility(delta_e, manifold: HyperfineManifold,
                            params: LineshapeParams):
    """Strength-weighted manifold susceptibility at two-photon detuning delta_e.

    Components are accumulated in manifold order so scalar and vectorised
    evaluation agree bit for bit.
    """
    d = np.asarray(delta_e, dtype=float)
    if not np.all(np.isfinite(d)):
        raise DomainError("detuning must be finite")
    acc = np.zeros(d.shape, dtype=complex)
    for o, s in zip(manifold.offsets, manifold.strengths):
        acc = acc + s * complex_voigt(d - o, params)
    if np.ndim(delta_e) == 0:
        return complex(acc)
    return acc


def spectrum_grid(manifold: HyperfineManifold, params: LineshapeParams,
                  grid) -> ComplexSpectrum:
    """Evaluate the manifold susceptibility on a strictly increasing grid."""
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise DomainError("grid must be one-dimensional with >= 2 points")
    if not np.all(np.isfinite(g)):
        raise DomainError("grid must be finite")
    if not np.all(np.diff(g) > 0):
        raise DomainError("grid must be strictly increasing")
    return ComplexSpectrum(detunings=g, values=manifold_susceptibility(g, manifold, params))
