"""Exception hierarchy shared across the package.

Each on-disk failure mode gets its own class so callers (and the CLI exit-code
mapping) can tell them apart.
"""


class AvsyncError(Exception):
    """Base class for all package errors."""


class ShapeError(AvsyncError):
    """Tensor or clip dimensions do not match what an operation requires."""


class ConfigError(AvsyncError):
    """Invalid configuration value (bad fraction, non-positive lr, ...)."""


class SamplingError(AvsyncError):
    """A requested pair cannot be drawn from the given corpus."""


class WindowError(AvsyncError):
    """A clip window falls outside its track."""


class DivergenceError(AvsyncError):
    """Training produced a non-finite loss."""


class FormatError(AvsyncError):
    """Base class for binary file format errors (tracks, checkpoints)."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FormatError):
    """File format version is not supported."""


class TruncatedFileError(FormatError):
    """File ends before the payload promised by its header."""


class PayloadLengthError(FormatError):
    """Header dims disagree with the actual payload length (trailing bytes)."""


class ManifestError(AvsyncError):
    """Base class for corpus manifest problems."""


class MissingTrackFileError(ManifestError):
    """Manifest references a track file that does not exist."""


class DuplicateTrackIdError(ManifestError):
    """Two manifest entries share a track_id."""


class TrackAlignmentError(ManifestError):
    """Audio and visual streams of one track disagree in frame length."""


class SpecMismatchError(AvsyncError):
    """Data does not match the representation spec a model expects."""
