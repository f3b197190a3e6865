"""Exceptions raised by the relegation package."""

from typing import Optional, Sequence


class RelegationError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(RelegationError, ValueError):
    """Series with mismatching dimensions, fields or malformed text."""


class ParameterError(RelegationError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class ConfigurationError(RelegationError):
    """A run configuration cannot be accepted.

    Args:
        message: The human readable reason.
        field: Dotted name of the offending config field, if known.
        line: Line of the offending token in the config file, if known.
        column: Column of the offending token, if known.
    """

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ) -> None:
        self.field = field
        self.line = line
        self.column = column
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}, column {column}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class SmallDivisorError(RelegationError):
    """A non-resonant harmonic has a divisor below the configured floor."""

    def __init__(self, k: Sequence[int], divisor: float, floor: float) -> None:
        self.k = tuple(int(v) for v in k)
        self.divisor = divisor
        self.floor = floor
        super().__init__(
            f"small divisor |k.omega| = {divisor:.3e} below floor {floor:.3e} for k = {self.k}"
        )


class ResourceError(RelegationError):
    """An enumeration or term budget was exceeded."""

    def __init__(self, message: str, order_reached: Optional[int] = None) -> None:
        self.order_reached = order_reached
        if order_reached is not None:
            message = f"{message} (order reached: {order_reached})"
        super().__init__(message)


class SequencingError(RelegationError):
    """An order was requested before the orders it depends on."""


class DegenerateError(RelegationError):
    """Every enumerated harmonic is resonant, so no small divisor exists."""


class CertificateRefused(RelegationError):
    """The non-resonant certificate was requested for a resonant frequency."""


class IntegrationError(RelegationError):
    """The flow integration produced non-finite values."""
