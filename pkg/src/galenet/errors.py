"""Exception hierarchy shared by every galenet module."""


class GaLeNetError(Exception):
    """Base class for all errors raised by this package."""


class InputError(GaLeNetError):
    """Bad user-supplied input: a file, a manifest, a flag value.

    The CLI maps these to exit code 2.
    """


# geo
class InvalidPolygonError(InputError):
    pass


class DegenerateAreaError(InputError):
    pass


# featurize
class EmptyTrackError(InputError):
    pass


class InvalidSeriesError(InputError):
    pass


# dataset
class ManifestError(InputError):
    pass


class MissingFileError(ManifestError):
    def __init__(self, path, what: str = "file"):
        self.path = str(path)
        super().__init__(f"missing {what}: {self.path}")


class DuplicateIdError(ManifestError):
    pass


class CountMismatchError(ManifestError):
    pass


class EmbeddingFormatError(InputError):
    pass


class BadMagicError(EmbeddingFormatError):
    pass


class TruncatedFileError(EmbeddingFormatError):
    pass


class MissingScenarioError(InputError):
    pass


# nn / models
class ShapeError(GaLeNetError, ValueError):
    pass


class BatchTooSmallError(GaLeNetError, ValueError):
    pass


class LabelError(GaLeNetError, ValueError):
    pass


class DegenerateLabelsError(LabelError):
    pass


class NonFiniteError(GaLeNetError, ValueError):
    pass


class CheckpointError(InputError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CorruptedCheckpointError(CheckpointError):
    pass


# metrics / training
class EmptyInputError(GaLeNetError, ValueError):
    pass


class NoComputableClassError(GaLeNetError, ValueError):
    pass
