"""Exception types shared across the package."""


class SemlcError(Exception):
    """Base class for all errors raised by this package."""


class LengthTooSmall(SemlcError):
    """A channel/filter count is below the minimum the operation supports."""


class ShapeMismatch(SemlcError):
    """Array shapes are inconsistent with each other or with a layer."""


class UnstableOperator(SemlcError):
    """The recurrent feedback is too strong for the equilibrium to exist.

    Raised when some eigenvalue of the connectivity matrix has real part
    at (or numerically too close to) 1. Shrinking the damping factor of
    the profile restores stability.
    """


class ZeroNormFilter(SemlcError):
    """A filter with all-zero weights makes cosine similarity undefined."""

    def __init__(self, index: int):
        super().__init__(f"filter {index} has zero norm; cosine similarity is undefined")
        self.index = index


class PathMismatch(SemlcError):
    """The two benchmark paths disagree; timing would measure incorrect code."""


class DataFormatError(SemlcError):
    """A dataset file does not conform to its declared binary format."""


class ConfigError(SemlcError):
    """A run configuration is malformed, contradictory, or references missing files."""


class DivergedLoss(SemlcError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss
