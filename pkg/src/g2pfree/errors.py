"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`G2PFreeError`. The
CLI maps :class:`ConfigError` to exit status 1 and every :class:`DataError`
to exit status 2.
"""

from __future__ import annotations


class G2PFreeError(Exception):
    exit_code = 2


class ConfigError(G2PFreeError):
    exit_code = 1


class DataError(G2PFreeError):
    exit_code = 2


# -- file formats -----------------------------------------------------------

class BadMagic(DataError):
    pass


class UnknownVersion(DataError):
    pass


class TruncatedFile(DataError):
    pass


class TrailingBytes(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class DimZero(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, line_no: int, message: str, path: str | None = None):
        where = f"{path}:{line_no}" if path else f"line {line_no}"
        super().__init__(f"{where}: {message}")
        self.line_no = line_no
        self.path = path


class MissingId(MalformedLine):
    pass


class DuplicateId(DataError):
    pass


class NegativeUnit(MalformedLine):
    pass


# -- numerics ---------------------------------------------------------------

class ShapeMismatch(DataError):
    pass


class DimMismatch(ShapeMismatch):
    pass


class TooFewFrames(DataError):
    pass


class TooFewDistinctPoints(DataError):
    pass


class ZeroCount(DataError):
    pass


class AllMaskedRow(DataError):
    pass


class TargetOutOfRange(DataError):
    pass


class AllPad(DataError):
    pass


# -- predictor --------------------------------------------------------------

class InvalidUtf8(DataError):
    pass


class SourceTooLong(DataError):
    pass


class TargetTooLong(DataError):
    pass


class UnitOutOfRange(DataError):
    pass


class EmptyDataset(DataError):
    pass


class MissingPair(DataError):
    pass


class ShapeMismatchOnLoad(DataError):
    pass


# -- metrics ----------------------------------------------------------------

class EmptyReference(DataError):
    pass


class LengthMismatch(DataError):
    pass


class SampleRateMismatch(DataError):
    pass


class SilentReference(DataError):
    pass


class NoOverlappingIds(DataError):
    pass
