"""Exception types shared across the package."""


class TractfitError(Exception):
    """Base class for all package-specific errors."""


class SilentFrameError(TractfitError):
    """Raised when an analysis frame carries no energy."""


class UnstableLpcError(TractfitError):
    """Raised when the Levinson-Durbin recursion breaks down."""


class UnvoicedFrameError(TractfitError):
    """Raised when no periodicity is found in the pitch search range."""


class HarmonicsNotFoundError(TractfitError):
    """Raised when the first two harmonic peaks cannot be located."""


class RdRangeError(TractfitError):
    """Raised when the Rd regression gives no valid glottal pulse timing."""


class NoVoicedFramesError(TractfitError):
    """Raised when an entire recording contains no voiced frames."""


class InvalidTargetError(TractfitError):
    """Raised when an optimization target produces a non-finite loss."""


class AudioIoError(TractfitError):
    """Raised for unreadable, malformed, or unsupported audio files."""


class SmoothingWindowWarning(UserWarning):
    """Emitted when a smoothing window does not fit the series."""
