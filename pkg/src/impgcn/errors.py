"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors exit 2,
numerical failures exit 3.
"""


class ImpgcnError(Exception):
    """Base class for package errors."""


class UsageError(ImpgcnError):
    """Bad flags, config keys, or option values."""


class DataError(ImpgcnError):
    """Malformed or inconsistent input data."""


class CheckpointError(DataError):
    """Unreadable, truncated, or incompatible checkpoint file."""


class NumericalError(ImpgcnError):
    """Non-finite values encountered during optimization."""


class StaleStackError(ImpgcnError):
    """A layer stack was used after its partition was replaced."""
