"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class UsageError(Exception):
    """Bad flags, out-of-domain hyper-parameters, malformed configs."""


class DataError(Exception):
    """Schema violations, broken invariants or unusable input files."""


class NumericalError(Exception):
    """Non-finite losses, singular systems, failed convergence."""
