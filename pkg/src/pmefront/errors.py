"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PMEFrontError(Exception):
    """Base class for all errors raised by pmefront."""


class DomainError(PMEFrontError):
    """Invalid geometry, position outside the domain, or bad argument range."""


class ConfigError(PMEFrontError):
    """Configuration parsing or validation failure.

    The message always names the offending key path (e.g. ``model.m``).
    """


class AlignmentError(PMEFrontError):
    """Fields or series that must share a grid or time axis do not."""


class CFLViolationError(PMEFrontError):
    """A step was requested with dt exceeding the stability bound."""


class NonFiniteStateError(PMEFrontError):
    """NaN or Inf appeared in the evolving state."""


class EnvelopeViolationError(PMEFrontError):
    """The support reached the truncated box edge, or the box cannot
    contain the propagation envelope for the requested horizon."""


class BoundaryError(PMEFrontError):
    """Free-boundary extraction or boundary diagnostics precondition failure."""
