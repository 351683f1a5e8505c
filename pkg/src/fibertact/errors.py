"""Exception types shared across the toolkit."""


class FibertactError(Exception):
    """Base class for toolkit errors."""


class DomainError(FibertactError, ValueError):
    """An input is outside the physically or numerically valid domain."""


class NotFoundError(FibertactError, KeyError):
    """A named resource (material, run, ...) does not exist."""
