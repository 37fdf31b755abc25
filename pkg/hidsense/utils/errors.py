"""
Exception types for the hidsense simulator.

Every error carries a human-readable message plus an optional details
dictionary, the same shape the CLI prints and the structured logger records.
"""

from typing import Any


class HidSenseError(Exception):
    """Base class for all errors raised by the simulator."""

    def __init__(self, message: str, details: dict[str, Any] | None = None):
        """
        Initialize the exception with error details.

        Args:
            message: The error message
            details: Optional error details as a dictionary
        """
        self.message = message
        self.details = details or {}
        error_msg = message
        if self.details:
            extra = ", ".join(f"{k}={v}" for k, v in self.details.items())
            error_msg = f"{error_msg} ({extra})"
        super().__init__(error_msg)


class ConfigError(HidSenseError):
    """Raised for invalid simulation, sensor or register configuration."""


class FirmwareError(HidSenseError):
    """Raised by the conversion pipeline (e.g. a LongToStr field overflow)."""


class ClockConfigError(HidSenseError):
    """Raised when an oscillator/PLL selection cannot produce a valid clock."""


class DescriptorError(HidSenseError):
    """Raised when a descriptor cannot be serialized or parsed."""

    def __init__(
        self,
        message: str,
        field: str | None = None,
        details: dict[str, Any] | None = None,
    ):
        self.field = field
        merged = dict(details or {})
        if field is not None:
            merged = {"field": field, **merged}
        super().__init__(message, merged)


class BusStateError(HidSenseError):
    """Raised for attach/detach calls that do not match the bus state."""


class ProtocolError(HidSenseError):
    """Raised when a transfer violates the USB protocol state machine."""


class EnumerationError(HidSenseError):
    """Raised when a step of host enumeration fails."""

    def __init__(self, message: str, step: str, details: dict[str, Any] | None = None):
        self.step = step
        super().__init__(message, {"step": step, **(details or {})})


class ReportDecodeError(HidSenseError):
    """Raised when a host input report cannot be decoded."""


class TraceFormatError(HidSenseError):
    """Raised when a trace log line cannot be parsed."""

    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        details: dict[str, Any] = {"line": line}
        if column is not None:
            details["column"] = column
        super().__init__(message, details)
