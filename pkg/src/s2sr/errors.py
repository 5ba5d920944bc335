"""Exception hierarchy shared by every s2sr module.

Each exception carries a stable machine-parsable ``code`` (kebab-case class
name) that the CLI prints alongside the human-readable message.
"""

import re


def _kebab(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "-", name).lower()


class S2SRError(Exception):
    """Base class for all errors raised by this package."""

    @property
    def code(self) -> str:
        return _kebab(type(self).__name__)


class MissingBand(S2SRError):
    """A required band is absent from a raster or manifest."""


class ShapeMismatch(S2SRError, ValueError):
    """Array shapes violate a resolution-ratio or geometry contract."""


class CorruptRaster(S2SRError):
    """A raster file could not be decoded."""


class IoFailure(S2SRError):
    """Reading or writing an artifact file failed."""


class BadFactor(S2SRError, ValueError):
    """Resampling factor outside the supported set {2, 6}."""


class ShapeNotDivisible(ShapeMismatch):
    """Input shape does not tile exactly by the decimation factor."""


class MissingLr60(S2SRError):
    """X6 processing requested on a scene without 60 m bands."""


class PatchTooLarge(S2SRError, ValueError):
    """Requested patch size exceeds or misaligns with the source extent."""


class DomainError(S2SRError, ValueError):
    """A probability input lies outside [0, 1]."""


class NonFiniteLoss(S2SRError):
    """Training produced a NaN/Inf loss; carries the aborting step."""

    def __init__(self, message: str, step: int | None = None, record: dict | None = None):
        super().__init__(message)
        self.step = step
        self.record = record


class DataExhausted(S2SRError):
    """The training data source yielded no batches."""


class VersionMismatch(S2SRError):
    """Checkpoint or raster container has an unknown magic/version."""


class ZeroReference(S2SRError, ValueError):
    """Reference image has zero mean; a relative-error ratio is undefined."""


class AllPixelsDegenerate(S2SRError):
    """Every spectral vector had (near-)zero norm; no angle is defined."""


class WindowTooLarge(S2SRError, ValueError):
    """Sliding window exceeds the image extent."""


class UntrainedParams(S2SRError):
    """Model parameters contain non-finite values."""
