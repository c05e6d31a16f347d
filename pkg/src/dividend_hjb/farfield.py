"""No-reinsurance region x > x*: phase-plane ODE and asymptotic tail.

With ``q = 0`` the HJB equation reduces to

    theta a v' + b^2/2 v'' + (1-p)/p (v')^{-p/(1-p)} - beta v = 0,

and with ``y(v) = v'(x)`` it becomes the first-order equation

    y'(v) = 2/b^2 (beta v / y - theta a - (1-p)/p y^{-1/(1-p)}).

Only one solution of that equation stays decreasing and convex for all
``v``; every neighbour separates from it like ``exp(beta x^2 / (b^2 (1-p)))``
when stepped forward. Stepped backward in ``v`` the same neighbours are
pulled onto it just as fast, so the curve is traced from the asymptotic
regime down to ``v(x*)``, and the surplus coordinate is recovered from
``dx/dv = 1/y`` anchored at ``x(v(x*)) = x*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .errors import ConvergenceFailure, DomainError, MonotonicityViolation
from .model import ModelParams, asymptotic_scale

Y_UNDERFLOW = 1e-300
# attraction exponent required between the start of the backward sweep and x_max
MIN_ATTRACTION = 60.0


@dataclass(frozen=True)
class OdeConfig:
    """Far-field integration settings.

    ``x_max`` of ``None`` means ``x_max_factor * x*``.
    """

    rtol: float = 1e-9
    atol: float = 1e-12
    first_step: Optional[float] = None
    max_steps: int = 1_000_000
    x_max: Optional[float] = None
    x_max_factor: float = 1000.0
    delta: float = 1e-2
    max_refinements: int = 3

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.x_max_factor > 1 and self.delta > 0):
            raise ValueError("OdeConfig tolerances and factors must be positive")
        if self.x_max is not None and not self.x_max > 0:
            raise ValueError("x_max must be positive")


def phase_rhs(v, y, params: ModelParams):
    """``dy/dv`` of the phase-plane equation."""
    p = params.p
    return (2.0 / params.b**2) * (
        params.beta * v / y - params.theta * params.a - (1.0 - p) / p * y ** (-1.0 / (1.0 - p))
    )


def _phase_dfdy(v, y, params: ModelParams):
    p = params.p
    return (2.0 / params.b**2) * (
        -params.beta * v / y**2 + y ** (-1.0 / (1.0 - p) - 1.0) / p
    )


def curvature_from_ode(v, vp, params: ModelParams):
    """``v''`` implied by the no-reinsurance ODE at ``(v, v')``."""
    p = params.p
    return (2.0 / params.b**2) * (
        params.beta * v - params.theta * params.a * vp - (1.0 - p) / p * vp ** (-p / (1.0 - p))
    )


def ode_residual(v, vp, vpp, params: ModelParams):
    p = params.p
    return (
        params.theta * params.a * vp
        + 0.5 * params.b**2 * vpp
        + (1.0 - p) / p * vp ** (-p / (1.0 - p))
        - params.beta * v
    )


def boundary_slope(v0: float, y0: float, params: ModelParams) -> float:
    """Phase-plane slope ``y'(v0)`` implied by the ODE at the boundary data.

    For exact pasting data this equals ``-eta a / b^2`` (non-cheap) or
    ``-(1-p)/x* = -theta a / b^2`` (cheap).
    """
    return float(phase_rhs(v0, y0, params))


def asymptotics(x, params: ModelParams):
    """Large-surplus forms ``(v, c, q)``.

    ``v ~ ((1-p)/beta)^(1-p) x^p / p``, ``c ~ beta x / (1-p)``, ``q = 0``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("asymptotics need x > 0")
    p = params.p
    v = asymptotic_scale(params) * x**p / p
    c = params.beta * x / (1.0 - p)
    q = np.zeros_like(x)
    if x.ndim == 0:
        return float(v), float(c), 0.0
    return v, c, q


def asymptotic_derivatives(x, params: ModelParams):
    """``(v, v', v'')`` of the asymptotic form."""
    x = np.asarray(x, dtype=float)
    p = params.p
    k = asymptotic_scale(params)
    return k * x**p / p, k * x ** (p - 1.0), -(1.0 - p) * k * x ** (p - 2.0)


@dataclass(frozen=True)
class PhaseGrid:
    """Samples of the decreasing-convex phase curve, ordered by increasing ``x``.

    ``y0_inner`` is the marginal value handed over by the inner branch; ``y[0]``
    is where the phase curve actually passes through ``v0``.
    """

    v: np.ndarray
    y: np.ndarray
    x: np.ndarray
    vpp: np.ndarray
    y0_inner: float
    params: ModelParams = field(repr=False)
    _v_spline: CubicHermiteSpline = field(repr=False, compare=False)
    _y_spline: CubicHermiteSpline = field(repr=False, compare=False)

    @property
    def x0(self) -> float:
        return float(self.x[0])

    @property
    def x_end(self) -> float:
        return float(self.x[-1])

    @property
    def slope_gap(self) -> float:
        """Relative gap between the phase curve's ``y(v0)`` and the inner ``v'(x*)``."""
        return float(self.y[0] / self.y0_inner - 1.0)

    def interpolate(self, x, derivative_source: str = "spline"):
        """``(v, v', v'')`` inside the grid.

        ``derivative_source="spline"`` differentiates the ``v'`` interpolant,
        which keeps ``v''`` smooth and makes ODE residuals a genuine check;
        ``"ode"`` recovers ``v''`` from the ODE at the interpolated
        ``(v, v')``, which is ill-conditioned far out.
        """
        x = np.asarray(x, dtype=float)
        v = self._v_spline(x)
        vp = self._y_spline(x)
        if derivative_source == "ode":
            vpp = curvature_from_ode(v, vp, self.params)
        elif derivative_source == "spline":
            vpp = self._y_spline(x, 1)
        else:
            raise ValueError(f"unknown derivative_source {derivative_source!r}")
        return v, vp, vpp


def _fritsch_carlson_ok(x, f, df) -> bool:
    """Hermite interpolant with slopes ``df`` is monotone on every interval."""
    secant = np.diff(f) / np.diff(x)
    if np.any(secant == 0):
        return False
    a = df[:-1] / secant
    b = df[1:] / secant
    return bool(np.all(a >= 0) and np.all(b >= 0) and np.all(a * a + b * b <= 9.0))


def _sweep(v_top, y_top, v0, params, rtol, atol, first_step):
    def rhs(v, u):
        return [phase_rhs(v, u[0], params), 1.0 / u[0]]

    def jac(v, u):
        y = u[0]
        return [[_phase_dfdy(v, y, params), 0.0], [-1.0 / y**2, 0.0]]

    kwargs = {}
    if first_step is not None:
        kwargs["first_step"] = first_step
    with np.errstate(all="ignore"):
        sol = solve_ivp(
            rhs, (v_top, v0), [y_top, 0.0], method="Radau", rtol=rtol,
            atol=[min(atol, 1e-3 * y_top), atol], jac=jac, **kwargs,
        )
    if sol.status != 0:
        raise ConvergenceFailure(f"phase-plane sweep failed: {sol.message}")
    return sol


def integrate_phase(
    v0: float,
    y0: float,
    params: ModelParams,
    config: Optional[OdeConfig] = None,
    x0: float = 1.0,
) -> PhaseGrid:
    """Trace the decreasing-convex phase curve from ``v0`` out to ``x_max``.

    Parameters
    ----------
    v0, y0 : value and marginal value of the inner branch at ``x0 = x*``
    x0 : anchor of the surplus coordinate (the free boundary)

    Raises
    ------
    ConvergenceFailure
        The implicit sweep stalled or exceeded ``max_steps``.
    MonotonicityViolation
        The traced curve is not positive, decreasing and convex in ``v``.
    """
    config = config or OdeConfig()
    if not (v0 > 0 and y0 > 0 and x0 > 0):
        raise DomainError("phase integration needs v0, y0 and x0 positive")
    p = params.p
    k = asymptotic_scale(params)
    x_max = config.x_max if config.x_max is not None else config.x_max_factor * x0
    if x_max <= x0:
        raise ValueError("x_max must exceed the free boundary")
    rate = params.beta / (params.b**2 * (1.0 - p))

    top = 1.3 * x_max
    if rate * (top**2 - x_max**2) < MIN_ATTRACTION:
        top = float(np.sqrt(x_max**2 + MIN_ATTRACTION / rate))

    rtol = config.rtol
    for attempt in range(config.max_refinements + 1):
        y_top = k * top ** (p - 1.0)
        v_top = k * top**p / p
        if y_top < Y_UNDERFLOW or not np.isfinite(y_top ** (-1.0 / (1.0 - p))):
            raise ConvergenceFailure("x_max too large: marginal value underflows")
        sol = _sweep(v_top, y_top, v0, params, rtol, config.atol, config.first_step)
        if sol.t.size > config.max_steps:
            raise ConvergenceFailure(f"phase-plane sweep needed {sol.t.size} steps")
        v = sol.t[::-1].copy()
        y = sol.y[0, ::-1].copy()
        x = sol.y[1, ::-1] - sol.y[1, -1] + x0
        v[0] = v0
        x[0] = x0
        if x[-1] < x_max:
            top *= 1.5
            continue
        cut = int(np.searchsorted(x, x_max)) + 1
        v, y, x = v[:cut], y[:cut], x[:cut]
        if np.any(~np.isfinite(y)) or np.any(y <= 0):
            raise MonotonicityViolation("phase curve reached y <= 0")
        if np.any(np.diff(y) >= 0) or np.any(np.diff(x) <= 0):
            raise MonotonicityViolation("phase curve is not strictly decreasing in v")
        # secants, not phase_rhs: far out the right side cancels to below its rounding
        secant = np.diff(y) / np.diff(v)
        if np.any(secant >= 0) or np.any(np.diff(secant) <= 0):
            raise MonotonicityViolation("phase curve is not decreasing-convex")
        slope = phase_rhs(v, y, params)
        vpp = y * slope
        if _fritsch_carlson_ok(x, v, y) and _fritsch_carlson_ok(x, y, vpp):
            return PhaseGrid(
                v=v, y=y, x=x, vpp=vpp, y0_inner=float(y0), params=params,
                _v_spline=CubicHermiteSpline(x, v, y),
                _y_spline=CubicHermiteSpline(x, y, vpp),
            )
        rtol /= 10.0
    raise ConvergenceFailure("could not build a monotone far-field grid")


def value_outer(x, grid: PhaseGrid, derivative_source: str = "spline"):
    """``(v, v', v'')`` for ``x >= x*``; the asymptotic form is used past the grid."""
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x < grid.x0 * (1.0 - 1e-12)):
        raise DomainError(f"outer branch requires x >= x* = {grid.x0!r}")
    v = np.empty_like(x)
    vp = np.empty_like(x)
    vpp = np.empty_like(x)
    inside = x <= grid.x_end
    if inside.any():
        xi = np.maximum(x[inside], grid.x0)
        v[inside], vp[inside], vpp[inside] = grid.interpolate(xi, derivative_source)
    if (~inside).any():
        v[~inside], vp[~inside], vpp[~inside] = asymptotic_derivatives(x[~inside], grid.params)
    if scalar:
        return float(v[0]), float(vp[0]), float(vpp[0])
    return v, vp, vpp
