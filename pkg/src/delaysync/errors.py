"""Exception types shared across the package."""


class DelaySyncError(Exception):
    """Base class for all package errors."""


class ConfigError(DelaySyncError, ValueError):
    """Invalid configuration (bad parameter values, missing fields)."""


class InputError(DelaySyncError, ValueError):
    """Invalid runtime input to an operation (negative latency, degenerate box)."""


class SequencingError(DelaySyncError, RuntimeError):
    """Events fed to a stateful component out of time order."""
