"""Optimal dividends with proportional reinsurance under CRRA utility."""

from .errors import (
    ConcavityViolation,
    ConvergenceFailure,
    DividendHJBError,
    DomainError,
    InvalidParam,
    InvalidPolicy,
    MonotonicityViolation,
    NumericalDomain,
    PastingMismatch,
    UnknownKind,
    ViolatedAssumption,
)
from .farfield import OdeConfig, asymptotics, integrate_phase
from .model import DerivedConstants, ModelParams, Regime, alpha, derived_constants, utility, validate
from .solution import Policy, SolverConfig, ValueSolution, solve

__version__ = "0.1.0"
