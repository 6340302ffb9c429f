"""Exception hierarchy shared by every module of the package."""


class RcStructError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(RcStructError, ValueError):
    """Array shapes do not agree with each other or with a declared size."""


class InvalidInputError(RcStructError, ValueError):
    """Input values are unusable (non-finite, empty, degenerate)."""


class InvalidLengthError(RcStructError, ValueError):
    """A sequence length is not compatible with the requested framing."""


class InvalidConfigError(RcStructError, ValueError):
    """A configuration value is out of its allowed range."""


class NotTrainedError(RcStructError, RuntimeError):
    """A model was used for inference before its trainable part was fit."""


class InvalidStateError(RcStructError, RuntimeError):
    """An object is missing a component required by the requested call."""
