"""Exception hierarchy shared across the package."""


class QaError(Exception):
    """Base class for all package-specific errors."""


class DataError(QaError):
    """Malformed or inconsistent dataset input."""


class CorpusIndexError(QaError):
    """Index construction, persistence, or lookup failure."""


class ScoreError(QaError):
    """Discriminator score acquisition or assembly failure."""


class RemoteScoreError(ScoreError):
    """Remote scoring protocol or transport failure."""

    def __init__(self, message, batch_start=None, batch_end=None):
        super().__init__(message)
        self.batch_start = batch_start
        self.batch_end = batch_end


class CheckpointError(QaError):
    """Model checkpoint persistence failure or config mismatch."""


class ConfigError(QaError):
    """Invalid experiment or model configuration."""
