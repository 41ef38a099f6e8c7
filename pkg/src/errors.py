"""
Exception hierarchy shared by every vara-tts module.
"""
from pathlib import Path
from typing import List, Optional, Union


class VaraError(Exception):
    """Base class for all vara-tts errors."""
    pass


class InvalidArgumentError(VaraError, ValueError):
    """An operation received an argument outside its contract."""
    pass


class InvalidInputError(VaraError, ValueError):
    """Input data (audio, tokens, spectrogram) cannot be processed."""
    pass


class ConfigurationError(VaraError):
    """Configuration or fitted statistics are unusable."""
    pass


class UsageError(VaraError):
    """Command-line usage error."""
    pass


class FormatError(VaraError):
    """A file on disk does not follow the expected binary or manifest layout."""

    def __init__(self, message: str, path: Optional[Union[str, Path]] = None):
        self.path = str(path) if path is not None else None
        if self.path:
            message = f"{self.path}: {message}"
        super().__init__(message)


class VersionError(FormatError):
    """A file was written with an unsupported format version."""
    pass


class ConfigIncompatibleError(VaraError):
    """A checkpoint was written for a different architecture."""
    pass


class EvaluationError(VaraError):
    """A function under evaluation returned a non-finite value."""
    pass


class NumericFailure(VaraError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, batch_ids: Optional[List[str]] = None):
        self.batch_ids = list(batch_ids or [])
        if self.batch_ids:
            message = f"{message} (batch: {', '.join(self.batch_ids)})"
        super().__init__(message)


class InternalConsistencyError(VaraError):
    """An internal accounting identity was violated."""
    pass
