"""Exception types shared across the package."""


class RankcertError(Exception):
    """Base class for all errors raised by rankcert."""


class DataError(RankcertError, ValueError):
    """Input data is malformed or violates a declared bound."""


class DegenerateError(RankcertError, ValueError):
    """A statistic is undefined for the given data (e.g. zero variance)."""
