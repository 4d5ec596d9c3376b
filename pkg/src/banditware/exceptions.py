"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`BanditWareError`. Input problems also subclass ``ValueError`` (or
``KeyError`` for lookups) so generic handlers keep working.
"""


class BanditWareError(Exception):
    """Base class for all package errors."""


class DataError(BanditWareError, ValueError):
    """Input data violates a documented contract."""


class DimensionMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class InconsistentFeatures(DataError):
    pass


class EmptyData(DataError):
    pass


class ZeroVariance(DataError):
    pass


class DuplicateHardwareId(DataError):
    pass


class EmptyHardwareSet(DataError):
    pass


class UnknownHardwareId(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NegativeRuntime(DataError):
    pass


class MissingHistory(BanditWareError, RuntimeError):
    """A recommend-only state (loaded without histories) cannot be updated."""


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDataset(DataError):
    pass


class NoCompleteInstances(DataError):
    pass


class MissingArm(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class EmptyEnvironment(DataError):
    pass


class SampleTooLarge(DataError):
    pass


class NonSquareMatrix(DataError):
    pass


class SchemaError(DataError):
    """A persisted document (model or report) does not match its schema."""


class ChecksumMismatch(BanditWareError, RuntimeError):
    """Matrix squaring produced different results across worker counts."""
