"""Levenberg-Marquardt least squares and the fit models used by the sweeps.

The solver is a damped Gauss-Newton iteration on the residual vector
r(p) = (model(x, p) - y)/sigma_y.  The damping factor starts at 1e-3,
shrinks by 10 after an accepted step and grows by 10 after a rejected
one.  Derivatives are central differences with relative step 1e-6.
Convergence is declared when the relative cost decrease falls below
1e-10 or the gradient norm falls below 1e-12; a step rejected with the
damping already beyond 1e8 means no further decrease is achievable at
floating-point resolution and also counts as converged.

Parameter covariance is (J^T J)^{-1} at the solution, scaled by the
residual variance when sigma_y was not given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .atomic import HyperfineManifold, LineshapeParams, default_lineshape, default_manifold
from .errors import DomainError
from .kerr import dispersion_reference, normalized_dispersion

__all__ = [
    "FitResult",
    "least_squares_fit",
    "confidence_interval",
    "power_law_model",
    "saturation_law_model",
    "dispersion_profile_model",
    "loglog_slope",
]

_LAMBDA0 = 1e-3
_LAMBDA_GROW = 10.0
_LAMBDA_SHRINK = 0.1
_LAMBDA_CAP = 1e8
_MAX_ITER = 200
_COST_RTOL = 1e-10
_GRAD_ATOL = 1e-12
_DIFF_REL = 1e-6

Model = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FitResult:
    params: np.ndarray
    covariance: np.ndarray
    cost: float                       # 0.5 * sum of squared residuals
    converged: bool
    n_iterations: int
    message: str
    cost_history: np.ndarray = field(repr=False)

    @property
    def param_std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _jacobian(model: Model, x: np.ndarray, p: np.ndarray,
              step_scale: np.ndarray) -> np.ndarray:
    # step relative to the larger of the current and starting magnitude, so
    # a parameter passing through zero keeps a resolvable step
    n = p.size
    cols = []
    for k in range(n):
        h = _DIFF_REL * max(abs(p[k]), step_scale[k])
        pp = p.copy()
        pm = p.copy()
        pp[k] += h
        pm[k] -= h
        with np.errstate(all="ignore"):
            cols.append((np.asarray(model(x, pp), dtype=float)
                         - np.asarray(model(x, pm), dtype=float)) / (2.0 * h))
    return np.column_stack(cols)


def least_squares_fit(model: Model, x: Sequence[float], y: Sequence[float],
                      p0: Sequence[float], sigma_y: Sequence[float] | None = None,
                      bounds: Sequence[tuple[float, float]] | None = None,
                      max_iter: int = _MAX_ITER) -> FitResult:
    """Fit ``model(x, params)`` to ``y`` starting from ``p0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.asarray(p0, dtype=float).copy()
    if x.ndim != 1 or y.shape != x.shape:
        raise DomainError("x and y must be one-dimensional and the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("x and y must be finite")
    if p.ndim != 1 or p.size == 0 or not np.all(np.isfinite(p)):
        raise DomainError("p0 must be a finite non-empty vector")
    if x.size < p.size:
        raise DomainError("need at least as many points as parameters")
    if sigma_y is None:
        w = np.ones_like(y)
        scale_cov = True
    else:
        w = np.asarray(sigma_y, dtype=float)
        if w.shape != y.shape or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("sigma_y must be positive, finite and match y")
        scale_cov = False
    if bounds is not None:
        bounds = [(float(lo), float(hi)) for lo, hi in bounds]
        if len(bounds) != p.size or any(lo > hi for lo, hi in bounds):
            raise DomainError("bounds must give one valid (lo, hi) per parameter")
        p = np.array([min(max(v, lo), hi) for v, (lo, hi) in zip(p, bounds)])

    def residuals(pv: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            f = np.asarray(model(x, pv), dtype=float)
        return (f - y) / w

    def cost_of(r: np.ndarray) -> float:
        return 0.5 * float(r @ r)

    step_scale = np.maximum(np.abs(p), 1e-12)
    r = residuals(p)
    if not np.all(np.isfinite(r)):
        raise DomainError("model is not finite at the starting point")
    cost = cost_of(r)
    history = [cost]
    lam = _LAMBDA0
    converged = False
    message = "iteration limit reached"
    it = 0
    for it in range(1, max_iter + 1):
        jac = _jacobian(model, x, p, step_scale) / w[:, None]
        grad = jac.T @ r
        if float(np.linalg.norm(grad)) < _GRAD_ATOL:
            converged = True
            message = "gradient norm below tolerance"
            break
        jtj = jac.T @ jac
        accepted = False
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj))
                                       + 1e-300 * np.eye(p.size), -grad)
            except np.linalg.LinAlgError:
                return FitResult(params=p, covariance=np.full((p.size, p.size), np.nan),
                                 cost=cost, converged=False, n_iterations=it,
                                 message="singular normal equations",
                                 cost_history=np.asarray(history))
            p_try = p + step
            if bounds is not None:
                p_try = np.array([min(max(v, lo), hi)
                                  for v, (lo, hi) in zip(p_try, bounds)])
            r_try = residuals(p_try)
            cost_try = cost_of(r_try) if np.all(np.isfinite(r_try)) else math.inf
            if cost_try < cost:
                lam = max(lam * _LAMBDA_SHRINK, 1e-15)
                rel_drop = (cost - cost_try) / max(cost, 1e-300)
                p, r, cost = p_try, r_try, cost_try
                history.append(cost)
                accepted = True
                if rel_drop < _COST_RTOL:
                    converged = True
                    message = "relative cost decrease below tolerance"
                break
            lam *= _LAMBDA_GROW
            if lam > _LAMBDA_CAP:
                # no descent direction at float resolution: stalled at minimum
                converged = True
                message = "relative cost decrease below tolerance"
                break
        if converged or not accepted:
            break

    jac = _jacobian(model, x, p, step_scale) / w[:, None]
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.full((p.size, p.size), np.nan)
        converged = False
        message = "singular normal equations at solution"
    if scale_cov:
        dof = max(x.size - p.size, 1)
        cov = cov * (2.0 * cost / dof)
    return FitResult(params=p, covariance=cov, cost=cost, converged=converged,
                     n_iterations=it, message=message,
                     cost_history=np.asarray(history))


def confidence_interval(result: FitResult, index: int,
                        level: float = 0.95) -> tuple[float, float]:
    """Normal-theory confidence interval for one fitted parameter."""
    if not result.converged:
        raise DomainError("confidence interval requested for a fit that did not converge")
    if not 0 <= index < result.params.size:
        raise DomainError("parameter index out of range")
    if not math.isclose(level, 0.95):
        raise DomainError("only the 95% level is supported")
    half = 1.96 * float(result.param_std[index])
    centre = float(result.params[index])
    return (centre - half, centre + half)


def power_law_model(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """a * x**b with p = (a, b); x must be positive."""
    a, b = p
    return a * np.power(x, b)


def saturation_law_model(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """a / (1 + x/p_sat) with p = (a, p_sat)."""
    a, p_sat = p
    return a / (1.0 + x / p_sat)


def dispersion_profile_model(manifold: HyperfineManifold | None = None,
                             lineshape: LineshapeParams | None = None) -> Model:
    """Model factory: scale * D(x - center) + offset on the fixed manifold.

    D is the dispersive profile normalized so its extremum is +1, hence the
    fitted scale parameter reads directly as the extremal phase.  Parameter
    vector is (scale, center, offset).
    """
    manifold = manifold if manifold is not None else default_manifold()
    lineshape = lineshape if lineshape is not None else default_lineshape()

    def model(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        scale, center, offset = p
        return scale * normalized_dispersion(x - center, manifold, lineshape) + offset

    return model


def derived_phase_max(result: FitResult) -> float:
    """Extremal phase implied by a dispersion-profile fit."""
    return float(result.params[0])


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """OLS fit of log y = intercept + slope*log x.

    Returns (slope, intercept, slope_ci) where slope_ci is the 95%
    half-width.  Requires strictly positive data on both axes.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.shape != x.shape or x.size < 3:
        raise DomainError("need at least three matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log slope needs positive x and y")
    lx = np.log(x)
    ly = np.log(y)
    lxc = lx - lx.mean()
    sxx = float(lxc @ lxc)
    if sxx == 0.0:
        raise DomainError("x values are all equal")
    slope = float(lxc @ ly) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    resid = ly - (intercept + slope * lx)
    dof = max(x.size - 2, 1)
    se = math.sqrt(float(resid @ resid) / dof / sxx)
    return slope, intercept, 1.96 * se
