"""Exception hierarchy.

Every error raised by the package derives from :class:`WatermarkError`; the CLI
reports ``type(err).__name__`` in its JSON summary.
"""


class WatermarkError(Exception):
    pass


# data handling
class FormatError(WatermarkError):
    pass


class ParseError(WatermarkError):
    pass


class EmptyInput(WatermarkError):
    pass


class DegenerateScale(WatermarkError):
    pass


class InvalidLength(WatermarkError):
    pass


class AliasError(WatermarkError):
    pass


class InvalidSplit(WatermarkError):
    pass


# spectral
class SymmetryViolation(WatermarkError):
    pass


class InsufficientSamples(WatermarkError):
    pass


class ShapeError(WatermarkError):
    pass


class UndefinedReference(WatermarkError):
    pass


# bits
class EncodingError(WatermarkError):
    pass


class LengthError(WatermarkError):
    pass


# model / training
class ArchError(WatermarkError):
    pass


class InvalidStd(WatermarkError):
    pass


class VersionError(WatermarkError):
    pass


class CorruptCheckpoint(WatermarkError):
    pass


class InvalidLambda(WatermarkError):
    pass


class DivergenceError(WatermarkError):
    pass


# verification / evaluation
class InvalidThreshold(WatermarkError):
    pass


class CapacityError(WatermarkError):
    pass


class InvalidSpec(WatermarkError):
    pass


class DegenerateVector(WatermarkError):
    pass


class InvalidTrainingSet(WatermarkError):
    pass


class MissingResource(WatermarkError):
    pass
