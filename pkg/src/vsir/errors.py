"""Exception types shared across the package."""


class VsirError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VsirError):
    """Invalid training or CLI configuration."""


class CorpusError(VsirError):
    """Malformed corpus input or an unusable corpus state."""


class QueryError(VsirError):
    """A query cannot be projected into the model space."""


class EmptyQueryError(QueryError):
    """The query contained no tokens at all."""


class OovQueryError(QueryError):
    """The query contained tokens, but none survived vocabulary lookup."""


class ZeroVectorError(VsirError):
    """A zero vector reached an operation that requires a nonzero norm."""


class GradientError(VsirError):
    """A gradient or loss value became non-finite."""


class ModelFormatError(VsirError):
    """A persisted model file could not be read."""


class MagicMismatchError(ModelFormatError):
    """The file does not start with the expected magic bytes."""


class DimensionMismatchError(ModelFormatError):
    """Header dimensions are inconsistent with each other or the payload."""


class TruncatedFileError(ModelFormatError):
    """The file ends before all declared tensor data is present."""


class EvaluationError(VsirError):
    """Invalid run/qrels input for metric computation."""
