"""Exception hierarchy shared by every rolsh module."""

from __future__ import annotations


class RolshError(Exception):
    """Base class for all errors raised by this package."""


class DatasetEmpty(RolshError, ValueError):
    pass


class EmptyDataset(DatasetEmpty):
    """A vector file contained no records."""


class InvalidData(RolshError, ValueError):
    """A non-finite coordinate was found at (row, col)."""

    def __init__(self, row: int, col: int, message: str | None = None):
        self.row = row
        self.col = col
        super().__init__(message or f"non-finite value at row {row}, column {col}")


class InvalidRadius(RolshError, ValueError):
    pass


class DimensionMismatch(RolshError, ValueError):
    pass


class InvalidSensitivity(RolshError, ValueError):
    pass


class PoolTooSmall(RolshError, ValueError):
    def __init__(self, needed: int, have: int, k: int | None = None):
        self.needed = needed
        self.have = have
        self.k = k
        where = f" for k={k}" if k is not None else ""
        super().__init__(f"sample pool too small{where}: needed {needed}, have {have}")


class DegenerateFit(RolshError, ValueError):
    pass


class NotFittedError(RolshError, RuntimeError):
    pass


class TooFewSamples(RolshError, ValueError):
    pass


class ZeroVariance(RolshError, ValueError):
    pass


class EmptyInput(RolshError, ValueError):
    pass


class DuplicateCell(RolshError, ValueError):
    pass


class CorruptFile(RolshError, ValueError):
    def __init__(self, offset: int, message: str | None = None):
        self.offset = offset
        super().__init__(message or f"corrupt or truncated record at byte offset {offset}")


class DimensionVaries(RolshError, ValueError):
    def __init__(self, record_index: int, expected: int, found: int):
        self.record_index = record_index
        super().__init__(
            f"record {record_index} has dimension {found}, expected {expected}"
        )


class UnsupportedFormat(RolshError, ValueError):
    """A binary blob has the wrong magic bytes or an unknown version."""


class ModelNotFound(RolshError, FileNotFoundError):
    pass


class ConfigError(RolshError, ValueError):
    pass


class TimingIsolationError(RolshError, RuntimeError):
    """Timing was requested while more than one worker thread was active."""
