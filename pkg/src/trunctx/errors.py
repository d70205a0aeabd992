"""Exception hierarchy shared by all trunctx modules."""


class TrunctxError(Exception):
    """Base class for every error raised by trunctx."""


class ValidationError(TrunctxError, ValueError):
    """Invalid input (geometry, resolution, parameters)."""


class InvalidResolutionError(ValidationError):
    pass


class DisjointnessError(ValidationError):
    """Two domains whose closures must be disjoint overlap or touch."""


class NormalizationError(ValidationError):
    pass


class GridMismatchError(ValidationError):
    pass


class SingularKernelError(DisjointnessError):
    """The principal-value case (overlapping closures) is not supported."""


class GeometryError(ValidationError):
    pass


class EllipticityError(ValidationError):
    pass


class FitError(ValidationError):
    """Too little data for a requested fit."""


class ConvergenceError(TrunctxError):
    """An iterative solver hit its iteration cap.

    ``last`` carries whatever partial result the solver had at that point.
    """

    def __init__(self, message, last=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.iterations = iterations
