"""Reference detectors: per-subcarrier LMMSE and the reservoir + slicer pipeline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import InvalidDimensionError
from .ofdm import TimeSignal, ofdm_demodulate, qam_demodulate_nearest, qam_hard_indices, constellation
from .reservoir import TrainedEsn, cascade_equalize


@dataclass(frozen=True)
class CsiEstimate:
    """``h[k]`` is the ``nr x nt`` channel estimate of subcarrier ``k``."""

    h: np.ndarray = field(repr=False)
    noise_var: float

    @property
    def nsc(self) -> int:
        return self.h.shape[0]


def estimate_csi(y_pilots, x_pilots, noise_var: float) -> CsiEstimate:
    """LMMSE channel estimate from ``(nr, n_pilot, nsc)`` and ``(nt, n_pilot, nsc)`` pilots."""
    y = np.asarray(y_pilots, dtype=np.complex128)
    x = np.asarray(x_pilots, dtype=np.complex128)
    if y.shape[1:] != x.shape[1:]:
        raise InvalidDimensionError("received and transmitted pilots must share (n_pilot, nsc)")
    nt, n_pilot = x.shape[0], x.shape[1]
    if n_pilot < nt:
        warnings.warn(f"{n_pilot} pilots for {nt} streams: channel is under-determined",
                      RuntimeWarning, stacklevel=2)
    obs = np.moveaxis(y, -1, 0)
    ref = np.moveaxis(x, -1, 0)
    if noise_var == 0:
        s = np.linalg.svd(ref, compute_uv=False)
        if np.any(s[:, -1] <= numerics.PINV_RTOL * s[:, 0]):
            warnings.warn("rank-deficient pilot matrix, using pseudo-inverse",
                          RuntimeWarning, stacklevel=2)
    return CsiEstimate(numerics.lmmse_estimate(obs, ref, noise_var), float(noise_var))


def lmmse_filter(h, noise_var: float) -> np.ndarray:
    """``H^H (H H^H + noise_var I)^-1`` for a batch of channel matrices."""
    h = np.asarray(h, dtype=np.complex128)
    h_h = np.conj(np.swapaxes(h, -1, -2))
    if noise_var == 0:
        return numerics.pseudo_inverse(h)
    gram = h @ h_h + noise_var * np.eye(h.shape[-2])
    try:
        # W = H^H G^-1  <=>  W^H = G^-1 H  (G Hermitian)
        return np.conj(np.swapaxes(np.linalg.solve(gram, h), -1, -2))
    except np.linalg.LinAlgError:
        return h_h @ numerics.pseudo_inverse(gram)


def lmmse_detect(y, csi: CsiEstimate) -> np.ndarray:
    """Linear estimates ``(nt, n, nsc)`` from received ``(nr, n, nsc)``."""
    y = np.asarray(y, dtype=np.complex128)
    if y.shape[-1] != csi.nsc or y.shape[0] != csi.h.shape[1]:
        raise InvalidDimensionError("received grid does not match the CSI dimensions")
    w = lmmse_filter(csi.h, csi.noise_var)
    return np.einsum("ktr,rnk->tnk", w, y)


def slice_streams(xhat, orders) -> np.ndarray:
    """Nearest-point decisions per stream, unit-energy scale."""
    out = np.empty_like(np.asarray(xhat, dtype=np.complex128))
    for s, order in enumerate(orders):
        out[s] = constellation(order).points[qam_hard_indices(xhat[s], order)]
    return out


def stream_bits(symbols, orders) -> list[np.ndarray]:
    """Gray bits of each stream's symbols, flattened in ``(symbol, subcarrier)`` order."""
    return [qam_demodulate_nearest(symbols[s], order) for s, order in enumerate(orders)]


def rcnet_equalize(stages: list[TrainedEsn], rx: TimeSignal) -> np.ndarray:
    """Reservoir cascade followed by CP removal and FFT: ``(nt, n_symbols, nsc)``."""
    out = cascade_equalize(stages, rx.samples)
    return ofdm_demodulate(TimeSignal(out, rx.nsc, rx.ncp))


def rcnet_detect(stages: list[TrainedEsn], rx: TimeSignal, orders, n_pilot: int) -> list[np.ndarray]:
    """Bits of the data symbols per stream via nearest-neighbour slicing."""
    xhat = rcnet_equalize(stages, rx)[:, n_pilot:]
    return stream_bits(xhat, orders)
