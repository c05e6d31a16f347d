"""Exception hierarchy shared by every solver stage."""


class DividendHJBError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParam(DividendHJBError, ValueError):
    """A model primitive violates its field-level constraint."""

    def __init__(self, name: str, value: float, constraint: str):
        self.name = name
        self.value = value
        self.constraint = constraint
        super().__init__(f"invalid parameter {name}={value!r}: requires {constraint}")


class ViolatedAssumption(DividendHJBError):
    """A regime assumption inequality fails for the supplied parameters."""

    def __init__(self, name: str, lhs: float, rhs: float):
        self.name = name
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(f"assumption violated: {name} (lhs={lhs:.12g}, rhs={rhs:.12g})")


class NumericalDomain(DividendHJBError, ArithmeticError):
    """A closed-form expression left its real domain (e.g. log of a non-positive number)."""


class DomainError(DividendHJBError, ValueError):
    """An evaluation point lies outside the domain of the requested branch."""


class ConvergenceFailure(DividendHJBError, RuntimeError):
    """An iterative method exhausted its budget or the integrator stalled."""


class MonotonicityViolation(DividendHJBError, RuntimeError):
    """The far-field solution left the decreasing-convex branch."""


class PastingMismatch(DividendHJBError, RuntimeError):
    """Inner and outer branches disagree at the free boundary beyond tolerance."""

    def __init__(self, quantity: str, inner: float, outer: float, rel_gap: float, tol: float):
        self.quantity = quantity
        self.inner = inner
        self.outer = outer
        self.rel_gap = rel_gap
        self.tol = tol
        super().__init__(
            f"pasting mismatch in {quantity} at x*: inner={inner:.15g}, outer={outer:.15g}, "
            f"relative gap {rel_gap:.3e} > {tol:.1e}"
        )


class ConcavityViolation(DividendHJBError, ValueError):
    """The second derivative is non-negative where the HJB maximiser needs V'' < 0."""


class InvalidPolicy(DividendHJBError, ValueError):
    """A feedback policy returned q outside [0, 1] or a negative dividend rate."""


class UnknownKind(DividendHJBError, ValueError):
    """Unrecognised perturbation kind."""
