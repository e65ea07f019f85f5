"""Exception hierarchy shared by all modules."""


class Error(Exception):
    """Base class for errors raised by stochrecon."""


class ConstructionError(Error):
    """A basis, kernel or noise object could not be built from its inputs."""


class NumericError(Error):
    """An iterative numerical procedure failed to converge."""


class DomainError(Error):
    """A support or evaluation point left the working box."""


class ResolutionError(Error):
    """Grids are incommensurable or too coarse for the requested level."""


class ArgumentError(Error, ValueError):
    """Invalid argument combination."""


class PreconditionError(Error):
    """A documented precondition of an operation is violated."""


class CapabilityError(Error):
    """The requested mode is not supported by the given object."""


class ValidationError(Error):
    """An experiment configuration failed validation."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
