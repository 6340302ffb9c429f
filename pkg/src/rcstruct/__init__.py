"""Reservoir-computing MIMO-OFDM detection with constellation-structure classification."""

from .errors import (InvalidConfigError, InvalidDimensionError, InvalidInputError,
                     InvalidLengthError, InvalidStateError, NotTrainedError, RcStructError)
from .harness import DESK_CONFIG, FULL_CONFIG, SimConfig, run_ber_sweep, run_subframe

__version__ = "0.1.0"

__all__ = [
    "DESK_CONFIG",
    "FULL_CONFIG",
    "SimConfig",
    "run_ber_sweep",
    "run_subframe",
    "RcStructError",
    "InvalidConfigError",
    "InvalidDimensionError",
    "InvalidInputError",
    "InvalidLengthError",
    "InvalidStateError",
    "NotTrainedError",
]
