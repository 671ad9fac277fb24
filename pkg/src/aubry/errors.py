"""Exception hierarchy.

Two families: ``ValidationError`` for bad inputs (CLI exit code 3) and
``NumericalError`` for failures of a numerical procedure (exit code 4).
"""


class AubryError(Exception):
    pass


class ValidationError(AubryError, ValueError):
    pass


class NumericalError(AubryError, ArithmeticError):
    pass


class SymmetryViolation(ValidationError):
    """Fourier coefficients do not describe a real-valued potential."""


class RationalInput(ValidationError):
    """Continued fraction terminated: frequency is rational at working precision."""


class InsufficientData(ValidationError):
    pass


class BoxTooSmall(ValidationError):
    pass


class SupportOverflow(ValidationError):
    pass


class ConfigError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutOfRange(ValidationError):
    pass


class NotHermitian(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


class LiftBranchAmbiguity(NumericalError):
    pass


class DegenerateConjugation(NumericalError):
    def __init__(self, message, theta=None):
        self.theta = theta
        super().__init__(message)


class FitUnreliable(NumericalError):
    pass


class NoLabelFound(NumericalError):
    pass
