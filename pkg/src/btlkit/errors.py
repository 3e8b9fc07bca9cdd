"""Exception hierarchy shared across btlkit modules."""


class BtlError(Exception):
    """Base class for all btlkit errors."""


class InvariantError(BtlError, ValueError):
    """A domain value violates one of its construction invariants."""


class ParseError(BtlError, ValueError):
    """A completion could not be parsed into a BtlOutput.

    ``location`` names the first offending part of the text, e.g. ``"link"``
    or ``"blink.element[2].bbox"``.
    """

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


class DomainError(BtlError, ValueError):
    """An argument lies outside the domain of a mathematical function."""


class OverflowGuard(BtlError, OverflowError):
    """An exponent exceeded the configured cap before evaluation."""


class ModelUnavailable(BtlError):
    """The ranking model endpoint failed after all retries."""


class JoinError(BtlError):
    """Records from two inputs could not be joined by step id."""


class ConfigError(BtlError, ValueError):
    """Invalid tool configuration."""
