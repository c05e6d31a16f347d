"""Closed-form value function and feedback policy on the reinsurance region (0, x*].

Non-cheap regime: the solution is parametrised by the log marginal value
``xi = -log v'(x)`` through ``x = g(xi)`` with
``g(xi) = (1-p) B exp(xi/(1-p)) + D xi + Q1`` on ``[xi0, xi*]``.
Cheap regime: ``v(x) = M x**p / p``.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceFailure, DomainError
from .model import DerivedConstants, ModelParams, Regime

# below this surplus the one-sided limits at 0+ are returned
X_FLOOR = 1e-14
ROOT_TOL = 1e-12
MAX_ITER = 200
# relative slack accepted above x* before DomainError
EDGE_SLACK = 1e-12


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _check_domain(x: np.ndarray, x_star: float) -> None:
    if np.any(~np.isfinite(x)) or np.any(x <= 0.0):
        raise DomainError("inner branch requires 0 < x")
    if np.any(x > x_star * (1.0 + EDGE_SLACK)):
        raise DomainError(f"inner branch requires x <= x* = {x_star!r}")


class InnerNonCheap:
    """Inner branch for ``eta > theta``."""

    def __init__(self, params: ModelParams, consts: DerivedConstants):
        if consts.regime is not Regime.NON_CHEAP:
            raise ValueError("InnerNonCheap needs non-cheap constants")
        self.params = params
        self.consts = consts
        p = params.p
        self._s = 1.0 / (1.0 - p)
        self._e0 = np.exp(consts.xi0 * self._s)
        k = params.eta**2 * params.a**2 / (2.0 * params.b**2)
        self._vcoef = (k * consts.B + (1.0 - p) / p) / params.beta

    # -- the parametrisation ------------------------------------------------
    def g(self, xi):
        """Surplus level as a function of ``xi``; strictly increasing, ``g(xi0) = 0``."""
        xi, scalar = _as_array(xi)
        c = self.consts
        span = c.xiStar - c.xi0
        if np.any(xi < c.xi0 - 1e-12 * max(1.0, span)) or np.any(
            xi > c.xiStar + 1e-12 * max(1.0, span)
        ):
            raise DomainError(f"xi outside [{c.xi0!r}, {c.xiStar!r}]")
        out = self._g(xi)
        return float(out) if scalar else out

    def _g(self, xi):
        c = self.consts
        d = xi - c.xi0
        # same value as (1-p)B e^{xi/(1-p)} + D xi + Q1, without the cancellation
        return (1.0 - self.params.p) * c.B * self._e0 * np.expm1(d * self._s) + c.D * d

    def g_prime(self, xi):
        c = self.consts
        return c.B * np.exp(np.asarray(xi, dtype=float) * self._s) + c.D

    def g_inverse(self, x):
        """Unique ``xi`` in ``[xi0, xi*]`` with ``g(xi) = x``.

        Safeguarded Newton: g is increasing and convex, so Newton started at
        the right end of the bracket approaches the root from above; a
        bisection step replaces any iterate leaving the bracket.
        """
        x, scalar = _as_array(x)
        c = self.consts
        _check_domain(x, c.xStar)
        x = np.atleast_1d(np.minimum(x, c.xStar))
        lo = np.full(x.shape, c.xi0)
        hi = np.full(x.shape, c.xiStar)
        xi = hi.copy()
        done = x < X_FLOOR
        xi[done] = c.xi0
        done |= x >= c.xStar
        for _ in range(MAX_ITER):
            active = ~done
            if not active.any():
                break
            xa = xi[active]
            resid = self._g(xa) - x[active]
            converged = np.abs(resid) <= ROOT_TOL
            lo_a, hi_a = lo[active], hi[active]
            lo_a = np.where(resid < 0.0, xa, lo_a)
            hi_a = np.where(resid > 0.0, xa, hi_a)
            step = resid / self.g_prime(xa)
            cand = xa - step
            outside = (cand <= lo_a) | (cand >= hi_a)
            cand = np.where(outside, 0.5 * (lo_a + hi_a), cand)
            tiny = np.abs(cand - xa) <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(xa))
            xi[active] = np.where(converged, xa, cand)
            lo[active], hi[active] = lo_a, hi_a
            idx = np.flatnonzero(active)
            done[idx[converged | tiny]] = True
        else:
            if not done.all():
                raise ConvergenceFailure("g_inverse exhausted its iteration budget")
        return float(xi[0]) if scalar else xi

    # -- value and policy ---------------------------------------------------
    def value(self, x):
        """``(v, v', v'')`` at surplus ``x`` in (0, x*]."""
        x, scalar = _as_array(x)
        xi = self.g_inverse(x)
        xi = np.asarray(xi, dtype=float)
        # the constant part of the bracket vanishes exactly at xi0
        v = self._vcoef * np.exp(-xi) * self._e0 * np.expm1((xi - self.consts.xi0) * self._s)
        v = np.where(x < X_FLOOR, 0.0, v)
        vp = np.exp(-xi)
        vpp = -vp / self.g_prime(xi)
        if scalar:
            return float(v), float(vp), float(vpp)
        return v, vp, vpp

    def policy(self, x):
        """Optimal ``(q, c)`` on (0, x*]."""
        x, scalar = _as_array(x)
        xi = np.asarray(self.g_inverse(x), dtype=float)
        pr = self.params
        q = 1.0 - pr.eta * pr.a / pr.b**2 * self.g_prime(xi)
        q = np.where(x >= self.consts.xStar, 0.0, np.clip(q, 0.0, 1.0))
        c = np.exp(xi * self._s)
        if scalar:
            return float(q), float(c)
        return q, c

    def unclipped_q(self, x):
        x, scalar = _as_array(x)
        xi = np.asarray(self.g_inverse(x), dtype=float)
        pr = self.params
        q = 1.0 - pr.eta * pr.a / pr.b**2 * self.g_prime(xi)
        return float(q) if scalar else q


class InnerCheap:
    """Inner branch for ``eta == theta``: ``v = M x**p / p``."""

    def __init__(self, params: ModelParams, consts: DerivedConstants):
        if consts.regime is not Regime.CHEAP:
            raise ValueError("InnerCheap needs cheap constants")
        self.params = params
        self.consts = consts

    def value(self, x):
        x, scalar = _as_array(x)
        _check_domain(x, self.consts.xStar)
        M, p = self.consts.M, self.params.p
        v = M * x**p / p
        vp = M * x ** (p - 1.0)
        vpp = -M * (1.0 - p) * x ** (p - 2.0)
        if scalar:
            return float(v), float(vp), float(vpp)
        return v, vp, vpp

    def policy(self, x):
        x, scalar = _as_array(x)
        _check_domain(x, self.consts.xStar)
        q = np.clip(self.unclipped_q(x), 0.0, 1.0)
        q = np.where(x >= self.consts.xStar, 0.0, q)
        c = self.consts.M ** (-1.0 / (1.0 - self.params.p)) * x
        if scalar:
            return float(q), float(c)
        return q, c

    def unclipped_q(self, x):
        pr = self.params
        return 1.0 - pr.theta * pr.a * np.asarray(x, dtype=float) / (pr.b**2 * (1.0 - pr.p))


def inner_branch(params: ModelParams, consts: DerivedConstants):
    if consts.regime is Regime.CHEAP:
        return InnerCheap(params, consts)
    return InnerNonCheap(params, consts)


def value_noncheap(x, params: ModelParams, consts: DerivedConstants):
    return InnerNonCheap(params, consts).value(x)


def policy_noncheap(x, params: ModelParams, consts: DerivedConstants):
    return InnerNonCheap(params, consts).policy(x)


def value_policy_cheap(x, params: ModelParams, consts: DerivedConstants):
    """``(v, v', v'', q, c)`` of the cheap-regime inner branch."""
    branch = InnerCheap(params, consts)
    return (*branch.value(x), *branch.policy(x))
