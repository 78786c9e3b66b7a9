"""Exception types shared across the package."""


class SubpaintError(Exception):
    """Base class for errors raised by this package."""


class SubjectNotFoundError(SubpaintError):
    """Segmentation found no region above the minimum-area threshold."""


class EmptyMaskError(SubpaintError, ValueError):
    """An operation that needs set pixels received an empty mask."""


class UnboundTokenError(SubpaintError, ValueError):
    """A prompt uses a special token the model was never bound to."""


class WeightsFormatError(SubpaintError, ValueError):
    """A weights file is malformed or its architecture hash does not match."""


class DivergenceError(SubpaintError, RuntimeError):
    """Training produced a non-finite loss."""
