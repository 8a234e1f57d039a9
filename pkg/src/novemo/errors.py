"""Exception types shared across the package."""


class NovemoError(Exception):
    """Base class for all package-specific errors."""


class DegenerateGeometry(NovemoError):
    """A landmark configuration collapses below the geometric epsilon."""


class ShapeMismatch(NovemoError):
    """Array shapes or vector lengths are incompatible."""


class InvalidHyperparameter(NovemoError):
    """An optimizer or training hyperparameter is out of its valid range."""


class EmptyDataset(NovemoError):
    """An operation that needs samples received none."""


class MissingModality(NovemoError):
    """A sample lacks the landmarks, image, or descriptor a path requires."""


class EmptyEnsemble(NovemoError):
    """An ensemble provider was built with zero members."""


class InvalidK(NovemoError):
    """k-means received a k that the point set cannot support."""


class DuplicateClass(NovemoError):
    """A class name is already present in the registry."""


class UnresolvedNovelties(NovemoError):
    """Retraining was requested while buffer entries are still pending."""


class DuplicateSample(NovemoError):
    """A sample id was pushed into the novelty buffer twice."""


class BufferFull(NovemoError):
    """The novelty buffer reached its capacity bound."""


class InvalidTransition(NovemoError):
    """A buffer entry status change other than pending -> labeled/dismissed."""


class InvalidConfig(NovemoError):
    """A configuration value violates its declared invariant."""


class MalformedRow(NovemoError):
    """A dataset row failed to parse; message carries the row locus."""

    def __init__(self, row: int, reason: str):
        super().__init__(f"row {row}: {reason}")
        self.row = row
        self.reason = reason


class MissingColumn(NovemoError):
    """A required CSV column is absent from the header."""


class UnknownLandmarkName(NovemoError):
    """A landmark file used a point name outside the fixed schema."""


class MissingLandmark(NovemoError):
    """A landmark file omitted a point the schema requires."""


class DimensionMismatch(NovemoError):
    """A vector in a file does not match the expected length."""


class VersionMismatch(NovemoError):
    """A serialized model file carries an unsupported format version."""


class CorruptFile(NovemoError):
    """A serialized file failed its magic, length, or checksum test."""
