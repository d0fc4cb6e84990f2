"""Exception types shared across the package.

Every error raised by the public API derives from DualpaceError so callers
(and the CLI) can map failures to exit codes without matching on stdlib
exception classes.
"""

from __future__ import annotations


class DualpaceError(Exception):
    """Base class for all package errors."""


class ParseError(DualpaceError):
    """Malformed file or wire payload (bad JSON, bad CSV, unknown keys)."""


class ValidationError(DualpaceError):
    """Structurally well-formed input that violates a domain invariant."""


class NegativeCost(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class NegativeBudget(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class InvalidStep(ValidationError):
    pass


class InvalidRegimeParams(ValidationError):
    pass


class NoBracket(DualpaceError):
    """Bisection could not bracket a sign change of the subgradient."""


class TooLarge(DualpaceError):
    """Enumeration would exceed the brute-force cap."""


class TooShort(ValidationError):
    """Series too short for the requested analysis."""


class LengthMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class InsufficientHistory(DualpaceError):
    """Window does not hold enough rows for the requested method."""


class ServiceUnavailable(DualpaceError):
    """Remote forecast endpoint is unreachable."""


class ProtocolError(DualpaceError):
    """Remote endpoint answered outside the wire contract."""
