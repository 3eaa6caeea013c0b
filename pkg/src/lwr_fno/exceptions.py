"""Exception types raised across the package."""


class DomainError(ValueError):
    """A value lies outside the domain an operation is defined on."""


class ConfigurationError(ValueError):
    """A configuration violates an invariant (CFL, mode bounds, shapes...)."""


class TrainingDivergedError(RuntimeError):
    """Raised when a training loss becomes non-finite."""


class FormatError(ValueError):
    """A dataset, checkpoint or config file is malformed or truncated."""
