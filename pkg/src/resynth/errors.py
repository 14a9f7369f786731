"""Exception types shared across the pipeline."""


class ResynthError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(ResynthError):
    """An input violates a documented precondition or invariant."""


class FormatError(ResynthError):
    """A file is readable but not in a supported format."""


class BackendError(ResynthError):
    """A pluggable backend (codec encoder, extractor) is unavailable or failed."""
