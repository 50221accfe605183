"""Exception hierarchy shared by all modules."""


class GeometryError(Exception):
    """Base class for every error raised by ogtcheck."""


class PointOutsideDomain(GeometryError, ValueError):
    pass


class NonFiniteComponent(GeometryError, ArithmeticError):
    pass


class SingularMetric(GeometryError, ArithmeticError):
    pass


class SignatureMismatch(GeometryError, ValueError):
    pass


class StencilOutOfDomain(GeometryError, ValueError):
    pass


class OrderExceeded(GeometryError, ValueError):
    pass


class DefiniteSignature(GeometryError, ValueError):
    """Raised when a null vector is requested from a definite metric."""


class LeftDomain(GeometryError):
    """A geodesic left the chart; ``trace`` holds the part that stayed inside."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class StepTooLarge(GeometryError):
    pass


class TraceTooShort(GeometryError, ValueError):
    pass


class RankDeficient(GeometryError, ArithmeticError):
    pass


class InvalidCoefficients(GeometryError, ValueError):
    pass


class UnknownName(GeometryError, KeyError):
    pass


class UnsupportedModel(GeometryError, ValueError):
    pass
