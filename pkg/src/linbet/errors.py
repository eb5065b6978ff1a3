"""Exception types shared across the package."""


class LinbetError(Exception):
    pass


class InvalidInputError(LinbetError, ValueError):
    """Raised for malformed arguments (non-finite vectors, bad lengths, ...)."""


class ConfigError(LinbetError, ValueError):
    """Raised when a configuration cannot be run (bad dataset id, T too small, ...)."""


class InternalError(LinbetError, RuntimeError):
    """Raised when a numerical invariant that should be impossible to break is broken."""
