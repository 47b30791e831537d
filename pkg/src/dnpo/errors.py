"""Exception types shared across the toolkit."""


class DnpoError(Exception):
    """Base class for all toolkit errors."""


class UniverseMismatch(DnpoError):
    """Operands declare the same symbol with incompatible attributes."""


class RewriteDivergence(DnpoError):
    """Rewrite rules did not reach a fixed point within the step budget."""


class InvalidDifferentiation(DnpoError):
    """A dynamical variable has no right-hand side in the ODE system."""


class NotTranslatable(DnpoError):
    """Translation applied to a polynomial containing generic variables."""


class ShapeError(DnpoError):
    """Matrix assignment dimensions are inconsistent."""


class MissingAssignment(DnpoError):
    """A variable of the polynomial has no matrix assignment."""


class EmptyBasis(DnpoError):
    """Basis construction over an empty site window."""


class SpanOverflow(DnpoError):
    """A required monomial lies outside the indexed moment span."""

    def __init__(self, monomial, message=None):
        self.monomial = monomial
        super().__init__(message or f"monomial outside moment span: {monomial}")


class NotHermitian(DnpoError):
    """A Hermitian polynomial or matrix block was expected."""


class InvalidAxis(DnpoError):
    """Pauli axis outside {1, 2, 3}."""


class WindowTooSmall(DnpoError):
    """Site window too small to host any differential constraint."""


class DuplicateTime(DnpoError):
    """Interpolation data contains repeated sample times."""


class TooLarge(DnpoError):
    """Dense simulation requested beyond the memory guard."""


class Unsupported(DnpoError):
    """No sampling recipe exists for this scenario."""


class ParseError(DnpoError):
    """Malformed input text."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(DnpoError):
    """Non-finite values encountered in a numeric kernel."""


class IoError(DnpoError):
    """File could not be read or written."""
