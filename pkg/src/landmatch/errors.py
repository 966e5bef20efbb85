"""Exception hierarchy shared by all pipeline stages."""


class LandmatchError(Exception):
    """Base class for data errors raised by the library.

    ``land_id`` is filled in by callers that know which land impression was
    being processed, so that CLI messages can name it.
    """

    def __init__(self, message: str, land_id: str | None = None):
        super().__init__(message)
        self.land_id = land_id

    def __str__(self) -> str:
        msg = super().__str__()
        if self.land_id:
            return f"{self.land_id}: {msg}"
        return msg


# x3p container
class X3pError(LandmatchError):
    pass


class MissingMemberError(X3pError):
    pass


class MalformedMetadataError(X3pError):
    pass


class DimensionMismatchError(X3pError):
    pass


class UnsupportedSampleTypeError(X3pError):
    pass


class ChecksumMismatchError(X3pError):
    pass


class InvalidSurfaceError(X3pError):
    pass


# profiles and stability
class XOutOfRangeError(LandmatchError):
    pass


class RowMaskedError(LandmatchError):
    pass


class SurfaceTooShortError(LandmatchError):
    pass


# grooves
class SmoothingFactorError(LandmatchError, ValueError):
    pass


class NoPeakFoundError(LandmatchError):
    pass


class NoValleyFoundError(LandmatchError):
    pass


class EmptyAfterTrimError(LandmatchError):
    pass


# loess / circle
class WindowRankDeficientError(LandmatchError):
    pass


class CollinearPointsError(LandmatchError):
    pass


# alignment and striae
class EmptySignatureError(LandmatchError):
    pass


class InsufficientOverlapError(LandmatchError):
    pass


class SignatureTooShortError(LandmatchError):
    pass


class NoExtremaError(LandmatchError):
    pass


# classification and evaluation
class EmptyDataError(LandmatchError):
    pass


class SchemaMismatchError(LandmatchError):
    pass


class OneClassOnlyError(LandmatchError):
    pass


class CorpusEmptyError(LandmatchError):
    pass
