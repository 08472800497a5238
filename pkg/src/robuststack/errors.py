"""Exception types that map to CLI exit codes."""


class ConfigError(Exception):
    """Invalid configuration (CLI exit code 2)."""


class DataError(Exception):
    """Invalid or malformed input data (CLI exit code 3)."""
