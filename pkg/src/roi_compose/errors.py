"""Exception types shared across the package.

Every error carries a `category` used by the CLI to pick its exit code:
"io" -> 3, "validation" -> 4, "numeric" -> 5.
"""


class RoiComposeError(Exception):
    category = "validation"


class IoError(RoiComposeError):
    category = "io"


class ValidationError(RoiComposeError):
    category = "validation"


class NumericError(RoiComposeError):
    category = "numeric"


# --- ingest / interchange ---

class MissingFile(IoError):
    pass


class MalformedLine(ValidationError):
    pass


class BrokenTrack(ValidationError):
    pass


class UnsupportedCameraModel(ValidationError):
    pass


class MalformedJson(ValidationError):
    pass


class SchemaVersionMismatch(ValidationError):
    pass


class DegenerateOrbit(ValidationError):
    pass


# --- fields / grid files ---

class ResolutionTooSmall(ValidationError):
    pass


class NoUsableView(ValidationError):
    pass


class DivergedLoss(NumericError):
    pass


class CorruptHeader(IoError):
    pass


class ChecksumMismatch(IoError):
    pass


# --- geometry / rendering ---

class PixelOutOfBounds(ValidationError):
    pass


class NumericalDomainError(NumericError):
    pass


class DimensionMismatch(ValidationError):
    pass


# --- grouping ---

class EmptyRoi(ValidationError):
    pass


class SetTooSmall(ValidationError):
    pass


class EmptyTrainingSet(ValidationError):
    pass


# --- composition ---

class IntervalOverlapUnresolved(ValidationError):
    pass


class AblationUnsupported(ValidationError):
    pass


# --- metrics ---

class ImageTooSmall(ValidationError):
    pass


class EmptyMask(ValidationError):
    pass


class ResolutionMismatch(ValidationError):
    pass
