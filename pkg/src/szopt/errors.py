"""Exception types shared across modules, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Bad configuration value or file (exit code 2)."""


class DataError(ValueError):
    """Malformed input data (exit code 3)."""


class NumericalAbort(RuntimeError):
    """Non-finite value reached during optimization (exit code 4)."""
