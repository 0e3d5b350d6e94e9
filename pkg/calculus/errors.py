"""
Exception hierarchy for the operator calculus.

Every failure an operation can report on purpose derives from CalculusError,
so the command layer can tell input problems (exit 2) from failed numerical
checks (exit 1) without inspecting messages.
"""

from typing import Dict, Optional, Tuple


class CalculusError(Exception):
    """Base class for all calculus errors."""


class MalformedInputError(CalculusError):
    """Input data is structurally wrong (shapes, missing fields, bad expressions)."""

    def __init__(self, message: str, location: Optional[str] = None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location


class DomainError(CalculusError):
    """A parameter lies outside the domain of the operation."""


class DegenerateFrameError(CalculusError):
    """The frame is not a basis at some sample point."""

    def __init__(self, message: str, point: Tuple[float, ...]):
        super().__init__(message)
        self.point = point


class PatchMismatchError(CalculusError):
    """Operands live on different patches."""


class WeightUndefinedError(CalculusError):
    """The H-order of a zero operator is undefined; the caller must supply one."""


class CutoffRequiredError(CalculusError):
    """Kernel support leaks outside the injectivity radius of the chart."""


class LatticeMismatchError(CalculusError):
    """The zoom parameter does not map the frequency lattice into itself."""


class RefineGridError(CalculusError):
    """A grid computation would alias; a finer grid is required."""


class NotHomogeneousError(CalculusError):
    """A slice expected to be homogeneous fails the dyadic homogeneity check."""

    def __init__(self, message: str, fitted_slope: float, expected_weight: float):
        super().__init__(message)
        self.fitted_slope = fitted_slope
        self.expected_weight = expected_weight


class NotHEllipticError(CalculusError):
    """The principal cosymbol vanishes somewhere on the unit shell."""

    def __init__(self, message: str, witness: Dict):
        super().__init__(message)
        self.witness = witness


class ExtrapolationError(CalculusError):
    """Extrapolation to t = 0 failed its step-halving consistency check."""

    def __init__(self, message: str, diagnostics: Dict):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConvergenceError(CalculusError):
    """Dyadic slices do not converge to the t = 0 slice."""

    def __init__(self, message: str, errors: Tuple[float, ...]):
        super().__init__(message)
        self.errors = errors
