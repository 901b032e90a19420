"""Exception types shared across the package."""


class EikonalError(Exception):
    """Base class for all package errors."""


class DomainError(EikonalError):
    """Invalid argument relative to a domain (out-of-range index, bad shape)."""


class ParseError(EikonalError):
    """Malformed input file; carries the 1-based offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshValidationError(EikonalError):
    """Mesh violates a structural invariant (e.g. non-manifold edges)."""

    def __init__(self, message, edges=()):
        self.edges = tuple(edges)
        if self.edges:
            message = f"{message}: {list(self.edges)}"
        super().__init__(message)


class DegeneratePatchError(EikonalError):
    """A neighborhood patch is unusable (isolated vertex, zero-area triangle)."""


class NotReady(EikonalError):
    """A local solver cannot produce an estimate from the current patch.

    The marching engine treats this as a no-op for the point in question.
    """


class SolverFault(EikonalError):
    """A local solver returned NaN or a negative value."""

    def __init__(self, point, value):
        self.point = point
        self.value = value
        super().__init__(f"local solver returned {value!r} at point {point}")


class EngineInvariantError(EikonalError):
    """Front propagation violated an ordering invariant."""


class TrainingDiverged(EikonalError):
    """Training loss became non-finite."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")


class ResourceLimit(EikonalError):
    """Request exceeds a built-in size guard."""
