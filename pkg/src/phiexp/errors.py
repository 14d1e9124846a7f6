"""Exception hierarchy shared by all modules."""


class PhiExpError(Exception):
    """Base class for library errors."""


class GeneratorError(PhiExpError):
    """The generator could not be evaluated or is not admissible."""


class MetadataError(GeneratorError):
    """Declared growth exponents disagree with the fitted ones."""


class InconclusiveError(PhiExpError):
    """A tail limit could not be classified; carries both bracket ends."""

    def __init__(self, message, lower, upper):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class DomainError(PhiExpError, ValueError):
    """An argument lies outside the domain of the operation."""


class NumericError(PhiExpError, ArithmeticError):
    """An iterative method failed to reach its tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class BracketError(NumericError):
    """No sign change found while scanning for a root."""

    def __init__(self, message, scanned=None):
        super().__init__(message)
        self.scanned = scanned


class TruncationError(NumericError):
    """A truncation radius grew past its budget."""


class DegenerateError(NumericError):
    """A fitted covariance is not positive definite."""


class InputError(PhiExpError, ValueError):
    """Malformed matrix or vector input."""


class StiffnessError(NumericError):
    """Time step collapsed below its floor."""


class SchemeError(NumericError):
    """The discrete scheme produced an invalid state."""
