"""Exception hierarchy shared by all finitelhv modules."""


class FiniteLHVError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FiniteLHVError, ValueError):
    """An argument is outside the documented domain."""


class GeometryError(FiniteLHVError):
    """A polyhedral construction is ill-posed (degenerate hull, origin outside, ...)."""

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction


class DegeneratePolyhedronError(GeometryError):
    pass


class DecompositionError(GeometryError):
    """A target vector is not a convex combination of the given vertices."""

    def __init__(self, message, margin=None, direction=None):
        super().__init__(message, direction)
        self.margin = margin


class ResourceError(FiniteLHVError):
    """A size cap (vertex count, strategy count, ...) would be exceeded."""


class ProtocolError(FiniteLHVError):
    """A protocol precondition does not hold."""


class VisibilityTooHighError(ProtocolError):
    pass


class ConditioningError(FiniteLHVError):
    """Conditioning on a zero-probability outcome."""


class NumericalError(FiniteLHVError):
    """An iterative solver failed to converge."""
