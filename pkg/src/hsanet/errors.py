"""Exception types shared across the package.

The CLI maps these onto stable exit codes: configuration and input
problems exit with 2, numerical failures during training with 3.
"""


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class DataError(ValueError):
    """Unreadable or inconsistent input data; the message names the file."""


class NumericsError(RuntimeError):
    """Non-finite loss or other numerical failure during training."""
