"""Exception hierarchy shared by every module."""


class MSCGMError(Exception):
    """Base class for all package errors."""


class InvalidShapeError(MSCGMError, ValueError):
    pass


class InvalidArgumentError(MSCGMError, ValueError):
    pass


class DomainError(MSCGMError, ValueError):
    """Input lies outside the mathematical domain of the operation."""


class ContractViolationError(MSCGMError, RuntimeError):
    """A collaborator (predictor, layer, checkpoint) broke its declared contract."""


class StateError(MSCGMError, RuntimeError):
    pass


class TrainingDivergenceError(MSCGMError, FloatingPointError):
    pass


class InsufficientDataError(MSCGMError, ValueError):
    pass


class DegenerateDistributionError(MSCGMError, ValueError):
    pass


class FormatError(MSCGMError, ValueError):
    """Malformed on-disk data. ``offset`` is the byte position, when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
