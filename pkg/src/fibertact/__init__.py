"""Fiber-bundle tactile sensor simulation and characterization toolkit."""

__version__ = "0.1.0"

from fibertact.errors import DomainError, NotFoundError

__all__ = ["DomainError", "NotFoundError", "__version__"]
