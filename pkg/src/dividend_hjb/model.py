"""Model primitives, regime classification and closed-form constants.

The surplus follows ``dX = (theta - eta q) a dt + b (1 - q) dB - c dt`` and
the insurer maximises expected discounted CRRA utility of the dividend rate
``c`` up to ruin. Reinsurance is *cheap* when ``eta == theta`` and
*non-cheap* when ``eta > theta``; the two regimes use different formula sets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidParam, NumericalDomain, ViolatedAssumption


class Regime(enum.Enum):
    NON_CHEAP = "non-cheap"
    CHEAP = "cheap"


@dataclass(frozen=True)
class ModelParams:
    """Insurance and preference primitives.

    Parameters
    ----------
    a : claim drift rate
    b : claim volatility
    theta : insurer safety loading
    eta : reinsurer safety loading, ``eta >= theta``
    beta : discount rate
    p : CRRA exponent in (0, 1); utility is ``c**p / p``
    """

    a: float
    b: float
    theta: float
    eta: float
    beta: float
    p: float

    def __post_init__(self):
        for name in ("a", "b", "theta", "eta", "beta", "p"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise InvalidParam(name, value, "a finite number")
        for name in ("a", "b", "beta", "theta"):
            if getattr(self, name) <= 0.0:
                raise InvalidParam(name, getattr(self, name), f"{name} > 0")
        if not 0.0 < self.p < 1.0:
            raise InvalidParam("p", self.p, "0 < p < 1")
        if self.eta < self.theta:
            raise InvalidParam("eta", self.eta, f"eta >= theta (theta={self.theta})")

    @property
    def regime(self) -> Regime:
        # exact comparison on purpose: the regimes have different formula sets
        return Regime.CHEAP if self.eta == self.theta else Regime.NON_CHEAP


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class DerivedConstants:
    """Scalar constants of the closed-form inner solution.

    Fields that do not apply to the regime are ``None``.
    """

    regime: Regime
    alpha: float
    xStar: float
    B: Optional[float] = None
    D: Optional[float] = None
    xi0: Optional[float] = None
    xiStar: Optional[float] = None
    Q1: Optional[float] = None
    M: Optional[float] = None


def alpha(params: ModelParams) -> float:
    """``1 + 2 b^2 beta / (eta^2 a^2)``; in the cheap regime eta equals theta."""
    return 1.0 + 2.0 * params.b**2 * params.beta / (params.eta**2 * params.a**2)


def assumption_checks(params: ModelParams) -> list[AssumptionCheck]:
    al = alpha(params)
    p = params.p
    checks = [AssumptionCheck("alpha*(1-p) > 1", al * (1.0 - p), 1.0, al * (1.0 - p) > 1.0)]
    if params.regime is Regime.NON_CHEAP:
        lhs = (2.0 - al * (1.0 - p)) * params.eta - 2.0 * params.theta
        checks.append(AssumptionCheck("(2-alpha*(1-p))*eta - 2*theta < 0", lhs, 0.0, lhs < 0.0))
    return checks


def validate(params: ModelParams) -> tuple[Regime, list[AssumptionCheck]]:
    """Classify the regime and check its assumptions.

    Raises
    ------
    ViolatedAssumption
        For the first failing inequality, carrying both sides.
    """
    checks = assumption_checks(params)
    for check in checks:
        if not check.holds:
            raise ViolatedAssumption(check.name, check.lhs, check.rhs)
    return params.regime, checks


def _log(arg: float, what: str) -> float:
    if not arg > 0.0:
        raise NumericalDomain(f"logarithm argument for {what} is non-positive ({arg!r})")
    return math.log(arg)


def derived_constants(params: ModelParams) -> DerivedConstants:
    """Closed-form constants of the reinsurance-active region."""
    regime, _ = validate(params)
    a, b, theta, eta, beta, p = (
        params.a, params.b, params.theta, params.eta, params.beta, params.p,
    )
    al = alpha(params)
    if regime is Regime.CHEAP:
        x_star = b**2 * (1.0 - p) / (theta * a)
        base = beta / (1.0 - p) - theta**2 * a**2 / (2.0 * b**2) * p / (1.0 - p) ** 2
        if not base > 0.0:
            raise NumericalDomain(f"value-scale base is non-positive ({base!r})")
        M = base ** (-(1.0 - p))
        return DerivedConstants(regime=regime, alpha=al, xStar=x_star, M=M)

    B = -(2.0 * b**2 / (eta**2 * a**2)) * (1.0 - p) / (1.0 - al + al * p)
    D = 2.0 * b**2 / (al * eta**2 * a) * (eta - theta)
    xi0 = (1.0 - p) * _log(
        (eta - theta) * (al - 1.0 - al * p) * a * p / (al * (1.0 - p) ** 2), "xi0"
    )
    xi_star = (1.0 - p) * _log((b**2 - eta * a * D) / (eta * a * B), "xiStar")
    Q1 = -(1.0 - p) * B * math.exp(xi0 / (1.0 - p)) - D * xi0
    # g(xi*) written relative to xi0 to avoid cancelling against Q1
    x_star = (1.0 - p) * B * math.exp(xi0 / (1.0 - p)) * math.expm1(
        (xi_star - xi0) / (1.0 - p)
    ) + D * (xi_star - xi0)
    return DerivedConstants(
        regime=regime, alpha=al, xStar=x_star, B=B, D=D, xi0=xi0, xiStar=xi_star, Q1=Q1
    )


def utility(c, p: float):
    """CRRA utility ``c**p / p``; zero at zero consumption."""
    return np.power(c, p) / p


def asymptotic_scale(params: ModelParams) -> float:
    """``((1-p)/beta)**(1-p)``, the coefficient of ``x**p / p`` at infinity."""
    return ((1.0 - params.p) / params.beta) ** (1.0 - params.p)
