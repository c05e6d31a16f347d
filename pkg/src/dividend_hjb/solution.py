"""Piecewise value function, optimal feedback policy and the HJB residual."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConcavityViolation, DomainError, PastingMismatch
from .farfield import OdeConfig, PhaseGrid, asymptotic_derivatives, integrate_phase, value_outer
from .inner import X_FLOOR, inner_branch
from .model import DerivedConstants, ModelParams, Regime, derived_constants, validate


@dataclass(frozen=True)
class SolverConfig:
    ode: OdeConfig = field(default_factory=OdeConfig)
    # sanity bound on the inner/outer disagreement at x*; see ValueSolution.pasting.
    # The closed-form branch meets the far-field curve with a small intrinsic
    # v'' gap that grows as b shrinks (about 2e-2 at b = 0.1), so this only
    # catches a wrong branch or a broken grid.
    pasting_rtol: float = 5e-2


@dataclass(frozen=True)
class Policy:
    """Feedback controls ``q(x)`` and ``c(x)`` (vectorised callables)."""

    q: Callable[[np.ndarray], np.ndarray]
    c: Callable[[np.ndarray], np.ndarray]
    descriptor: str = ""


def hjb_expression(params: ModelParams, v, vp, vpp, *, clip: bool = True):
    """Left side of the HJB equation at its maximising controls.

    The maximiser is available in closed form: ``q_u = 1 + (eta a / b^2) v'/v''``
    clipped to ``[0, 1]`` and ``c = (v')^{-1/(1-p)}``.
    """
    v, vp, vpp = (np.asarray(t, dtype=float) for t in (v, vp, vpp))
    if np.any(vpp >= 0):
        raise ConcavityViolation("HJB maximiser needs V'' < 0")
    a, b, theta, eta, beta, p = (
        params.a, params.b, params.theta, params.eta, params.beta, params.p,
    )
    q = 1.0 + eta * a / b**2 * vp / vpp
    if clip:
        q = np.clip(q, 0.0, 1.0)
    c = vp ** (-1.0 / (1.0 - p))
    return (
        (theta - eta * q) * a * vp
        + 0.5 * b**2 * (1.0 - q) ** 2 * vpp
        - c * vp
        + c**p / p
        - beta * v
    )


class ValueSolution:
    """Value function and controls over ``(0, inf)``.

    Routing: closed form on ``(0, x*]``, phase-plane grid on ``(x*, x_end]``,
    asymptotic form beyond.
    """

    def __init__(
        self,
        params: ModelParams,
        regime: Regime,
        consts: DerivedConstants,
        grid: PhaseGrid,
    ):
        self.params = params
        self.regime = regime
        self.consts = consts
        self.inner = inner_branch(params, consts)
        self.grid = grid

    @property
    def x_star(self) -> float:
        return self.consts.xStar

    def _route(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~(x > 0)):
            raise DomainError("evaluation needs x > 0")
        return x, x <= self.x_star

    def derivatives(self, x, derivative_source: str = "spline"):
        """``(V, V', V'')``; ``derivative_source`` only affects the outer branch.

        The default differentiates the ``V'`` interpolant. Recovering ``V''``
        from the ODE identity cancels terms of order ``beta V`` down to
        ``V''`` and loses its sign once ``V''`` falls near ``1e-10 beta V``.
        """
        x, inner = self._route(x)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        inner = np.atleast_1d(inner)
        out = [np.empty_like(x) for _ in range(3)]
        if inner.any():
            for o, val in zip(out, self.inner.value(x[inner])):
                o[inner] = val
        if (~inner).any():
            for o, val in zip(out, value_outer(x[~inner], self.grid, derivative_source)):
                o[~inner] = val
        if scalar:
            return tuple(float(o[0]) for o in out)
        return tuple(out)

    def evaluate(self, x):
        """``(V, V', V'', q, c)`` with ``c = V'^{-1/(1-p)}`` and ``q = 0`` above x*."""
        x, inner = self._route(x)
        V, Vp, Vpp = self.derivatives(x)
        q = np.zeros(np.shape(x))
        if np.any(inner):
            q_in, _ = self.inner.policy(np.atleast_1d(x)[np.atleast_1d(inner)])
            q = np.atleast_1d(q)
            q[np.atleast_1d(inner)] = q_in
        c = np.asarray(Vp) ** (-1.0 / (1.0 - self.params.p))
        if np.ndim(x) == 0:
            return V, Vp, Vpp, float(np.atleast_1d(q)[0]), float(c)
        return V, Vp, Vpp, q, c

    def unclipped_q(self, x):
        """Unconstrained HJB maximiser ``1 + (eta a / b^2) V'/V''``."""
        _, Vp, Vpp = self.derivatives(x)
        pr = self.params
        return 1.0 + pr.eta * pr.a / pr.b**2 * np.asarray(Vp) / np.asarray(Vpp)

    def hjb_residual(self, x, derivative_source: str = "spline"):
        """HJB left side at the maximising controls.

        On the outer branch ``V''`` comes from the derivative of the ``V'``
        interpolant, so the residual measures the grid rather than restating
        the ODE.
        """
        V, Vp, Vpp = self.derivatives(x, derivative_source)
        res = hjb_expression(self.params, V, Vp, Vpp)
        return float(res) if np.ndim(x) == 0 else res

    def relative_hjb_residual(self, x, derivative_source: str = "spline"):
        V, Vp, Vpp = self.derivatives(x, derivative_source)
        res = hjb_expression(self.params, V, Vp, Vpp)
        return np.abs(res) / np.maximum(1.0, self.params.beta * np.asarray(V))

    def asymptote_ratios(self, x):
        """``V / v_asym - 1`` and ``c / c_asym - 1``."""
        V, Vp, _, _, c = self.evaluate(x)
        v_asym, _, _ = asymptotic_derivatives(x, self.params)
        c_asym = self.params.beta * np.asarray(x, dtype=float) / (1.0 - self.params.p)
        return np.asarray(V) / v_asym - 1.0, np.asarray(c) / c_asym - 1.0

    def pasting(self) -> dict[str, tuple[float, float, float]]:
        """One-sided ``(inner, outer, relative gap)`` of ``v, v', v''`` at x*."""
        inner = self.inner.value(self.x_star)
        outer = value_outer(self.x_star, self.grid, "ode")
        report = {}
        for name, i, o in zip(("v", "v'", "v''"), inner, outer):
            report[name] = (i, o, abs(o - i) / abs(i))
        return report

    def policy(self) -> Policy:
        def q(x):
            x = np.maximum(np.asarray(x, dtype=float), 0.5 * X_FLOOR)
            return self.evaluate(x)[3]

        def c(x):
            x = np.maximum(np.asarray(x, dtype=float), 0.5 * X_FLOOR)
            return self.evaluate(x)[4]

        return Policy(q=q, c=c, descriptor=f"optimal ({self.regime.value})")


def solve(params: ModelParams, config: Optional[SolverConfig] = None) -> ValueSolution:
    """Assemble the value function for validated parameters.

    Raises
    ------
    ViolatedAssumption, NumericalDomain
        From validation and the closed-form constants.
    ConvergenceFailure, MonotonicityViolation
        From the far-field build.
    PastingMismatch
        If inner and outer branches disagree at x* by more than
        ``config.pasting_rtol`` in any of ``v, v', v''``.
    """
    config = config or SolverConfig()
    regime, _ = validate(params)
    consts = derived_constants(params)
    branch = inner_branch(params, consts)
    v0, y0, _ = branch.value(consts.xStar)
    grid = integrate_phase(v0, y0, params, config.ode, x0=consts.xStar)
    sol = ValueSolution(params, regime, consts, grid)
    for name, (i, o, gap) in sol.pasting().items():
        if gap > config.pasting_rtol:
            raise PastingMismatch(name, i, o, gap, config.pasting_rtol)
    return sol


def evaluate(sol: ValueSolution, x):
    return sol.evaluate(x)


def hjb_residual(sol: ValueSolution, x):
    return sol.hjb_residual(x)
