"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: DataError -> 1,
NumericalError -> 2, plain OSError -> 3.
"""


class FactorLabError(Exception):
    """Base class for errors raised by this package."""


class DataError(FactorLabError):
    """Malformed input, failed validation, or a broken stage dependency."""


class NumericalError(FactorLabError):
    """A numerical procedure failed (non-convergence, rank deficiency)."""
