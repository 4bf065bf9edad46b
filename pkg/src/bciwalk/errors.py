"""Exception types shared across the package."""

from __future__ import annotations


class BciwalkError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(BciwalkError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateInputError(BciwalkError, ValueError):
    """Input is structurally valid but carries no usable information."""
