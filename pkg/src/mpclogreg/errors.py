"""Exception types shared across the package.

The CLI maps these onto process exit codes: UsageError -> 1, DataError -> 2,
ProtocolError -> 3. Anything else is a plain bug and escapes unmapped.
"""


class UsageError(ValueError):
    """Invalid configuration, flags or argument combinations."""


class DataError(ValueError):
    """Malformed or out-of-range input data."""


class ProtocolError(RuntimeError):
    """A secure-computation invariant was violated at run time."""


class DeadlockError(ProtocolError):
    """Every running party is blocked on recv and no message can arrive."""


class FixedPointRangeError(DataError):
    """A value does not fit the fixed-point encoding range."""
