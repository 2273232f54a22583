"""
Exception hierarchy shared by every module of the toolkit.

All exceptions derive from DynoptError and from the builtin type a caller
would naturally catch (ValueError for bad input, ArithmeticError for
numerical breakdown, RuntimeError for failed runs).
"""
from typing import Any, Optional


class DynoptError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(DynoptError, ValueError):
    """Invalid option, mesh or scheme/degree combination."""


class SizeError(DynoptError, ValueError):
    """Invalid count or mismatched array sizes."""


class DegeneracyError(DynoptError, ValueError):
    """Interpolation nodes are not pairwise distinct."""


class FormError(DynoptError, ValueError):
    """The problem lacks the form a transcription requires."""


class DivergenceError(DynoptError, ArithmeticError):
    """The oracle integrator produced a non-finite state."""


class SingularityError(DynoptError, ArithmeticError):
    """A reduced ODE hit a vanishing denominator."""

    def __init__(self, message: str, value: float):
        super().__init__(message)
        self.value = value


class SimulationError(DynoptError, RuntimeError):
    """A periodic simulation did not settle on a limit cycle."""


class ScenarioError(DynoptError, ValueError):
    """A scenario document failed to parse or validate."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        text = f"{message} ({', '.join(location)})" if location else message
        super().__init__(text)
        self.field = field
        self.line = line


class SolverFailure(DynoptError, RuntimeError):
    """A solve ended without an optimal status."""

    def __init__(self, message: str, report: Any = None, round_index: Optional[int] = None):
        super().__init__(message)
        self.report = report
        self.round_index = round_index
