"""Exception hierarchy.

Validation-type errors derive from ``ValueError`` so plain callers can catch
them generically; the CLI maps them to exit code 2.  Numerical-accuracy
errors map to exit code 3.
"""


class WignerPropError(Exception):
    """Base class for all package errors."""


class ValidationError(WignerPropError, ValueError):
    """Invalid argument or violated precondition."""


class AccuracyError(WignerPropError, ArithmeticError):
    """A numerical accuracy guard tripped."""


class EscapeError(AccuracyError):
    """Trajectory left the bounded region (or became non-finite)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DegenerateCurvatureError(AccuracyError):
    """|V''| below threshold where the scaled frame is undefined."""


class AliasingError(AccuracyError):
    """Fourier grid does not resolve the kernel phase."""

    def __init__(self, message, recommended=None):
        super().__init__(message)
        self.recommended = recommended


class BoundaryContaminationError(ValidationError):
    """Requested point or grid too close to the hard walls of the spectral box."""


class UnsupportedScenarioError(ValidationError):
    """Scenario outside the supported regime (e.g. mixed stability)."""
