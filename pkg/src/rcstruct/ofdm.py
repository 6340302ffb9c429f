"""QAM mapping, OFDM modulation with cyclic prefix, and subframe assembly.

Bit convention for square M-QAM with ``m = log2(M)`` bits per symbol:
bits at even positions (0, 2, ...) select the in-phase amplitude and bits
at odd positions (1, 3, ...) the quadrature amplitude. Each axis uses a
binary-reflected Gray code in which the all-zero pattern maps to the most
positive amplitude. A constellation point's index is the integer formed by
its bits read most-significant-first, so ``points[i]`` carries the bits of
``i``. Unnormalized per-axis amplitudes are the odd integers
``{-(sqrt(M)-1), ..., -1, +1, ..., sqrt(M)-1}``; the constellation is scaled
to unit average energy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import numerics
from .errors import InvalidConfigError, InvalidLengthError

SUPPORTED_ORDERS = (4, 16, 64)


def bits_per_symbol(order: int) -> int:
    if order not in SUPPORTED_ORDERS:
        raise InvalidConfigError(f"unsupported modulation order {order}")
    return int(order).bit_length() - 1


def _gray(j):
    return j ^ (j >> 1)


@dataclass(frozen=True)
class QamConstellation:
    """Gray-mapped square QAM with unit average energy."""

    order: int
    points: np.ndarray = field(repr=False)
    bit_map: np.ndarray = field(repr=False)
    scale: float

    @property
    def bits_per_symbol(self) -> int:
        return self.bit_map.shape[1]

    @property
    def side(self) -> int:
        return int(round(np.sqrt(self.order)))

    @property
    def grid_points(self) -> np.ndarray:
        """Points on the unnormalized odd-integer grid."""
        return self.points / self.scale


@lru_cache(maxsize=None)
def constellation(order: int) -> QamConstellation:
    m = bits_per_symbol(order)
    side = 1 << (m // 2)
    # amplitude of level j (0 = most positive) and its Gray label
    levels = side - 1 - 2 * np.arange(side)
    axis_code = _gray(np.arange(side))
    code_to_level = np.empty(side, dtype=int)
    code_to_level[axis_code] = np.arange(side)

    idx = np.arange(order)
    bit_map = (idx[:, None] >> (m - 1 - np.arange(m))) & 1
    weights = 1 << np.arange(m // 2 - 1, -1, -1)
    i_code = bit_map[:, 0::2] @ weights
    q_code = bit_map[:, 1::2] @ weights
    grid = levels[code_to_level[i_code]] + 1j * levels[code_to_level[q_code]]
    scale = np.sqrt(3.0 / (2.0 * (order - 1)))
    points = grid * scale
    points.setflags(write=False)
    bit_map.setflags(write=False)
    return QamConstellation(order=order, points=points, bit_map=bit_map.astype(np.int8), scale=scale)


def qam_modulate(bits, order: int) -> np.ndarray:
    """Map a flat bit sequence to unit-energy QAM symbols."""
    const = constellation(order)
    m = const.bits_per_symbol
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % m:
        raise InvalidLengthError(f"{bits.size} bits is not a multiple of {m}")
    idx = bits.reshape(-1, m) @ (1 << np.arange(m - 1, -1, -1))
    return const.points[idx]


def _slice_axis(u: np.ndarray, side: int, tie_tol: float) -> np.ndarray:
    """Nearest level index per axis; exact midpoints go to the smaller Gray label."""
    pos = (side - 1 - u) / 2.0
    level = np.clip(np.floor(pos + 0.5), 0, side - 1).astype(np.int64)
    lo = np.floor(pos).astype(np.int64)
    tie = (np.abs(pos - lo - 0.5) <= tie_tol) & (lo >= 0) & (lo < side - 1)
    lo_c = np.clip(lo, 0, side - 2) if side > 1 else lo
    tie_pick = np.where(_gray(lo_c) <= _gray(lo_c + 1), lo_c, lo_c + 1)
    return np.where(tie, tie_pick, level)


def qam_hard_indices(symbols, order: int, tie_tol: float = 1e-9) -> np.ndarray:
    """Index of the nearest constellation point for each symbol.

    Square QAM decouples into two per-axis decisions, so the search is done
    by slicing each axis rather than by computing all M distances.
    """
    const = constellation(order)
    side = const.side
    s = np.asarray(symbols, dtype=np.complex128) / const.scale
    i_level = _slice_axis(s.real, side, tie_tol)
    q_level = _slice_axis(s.imag, side, tie_tol)
    half = const.bits_per_symbol // 2
    i_code = _gray(i_level)
    q_code = _gray(q_level)
    idx = np.zeros(s.shape, dtype=np.int64)
    for b in range(half - 1, -1, -1):
        idx = (idx << 2) | (((i_code >> b) & 1) << 1) | ((q_code >> b) & 1)
    return idx


def qam_demodulate_nearest(symbols, order: int) -> np.ndarray:
    """Hard minimum-distance demapping to a flat bit array."""
    const = constellation(order)
    idx = qam_hard_indices(symbols, order)
    return const.bit_map[idx.ravel()].ravel()


@dataclass(frozen=True)
class FrameConfig:
    """Dimensions of one subframe.

    ``orders`` gives the modulation order of each stream; when omitted all
    ``nt`` streams use ``order``.
    """

    nt: int = 2
    nsc: int = 64
    ncp: int = 16
    n_pilot: int = 4
    n_data: int = 16
    order: int = 16
    orders: tuple[int, ...] | None = None

    @property
    def n_symbols(self) -> int:
        return self.n_pilot + self.n_data

    @property
    def stream_orders(self) -> tuple[int, ...]:
        return tuple(self.orders) if self.orders is not None else (self.order,) * self.nt

    @property
    def symbol_len(self) -> int:
        return self.nsc + self.ncp

    def validate(self) -> None:
        if self.n_pilot < 1:
            raise InvalidConfigError("at least one pilot symbol is required")
        if self.n_data < 0 or self.nt < 1:
            raise InvalidConfigError("stream and data-symbol counts must be non-negative")
        if self.nsc < 1 or self.nsc & (self.nsc - 1):
            raise InvalidConfigError(f"nsc must be a power of two, got {self.nsc}")
        if not 0 <= self.ncp < self.nsc:
            raise InvalidConfigError("cyclic prefix must satisfy 0 <= ncp < nsc")
        if len(self.stream_orders) != self.nt:
            raise InvalidConfigError("one modulation order per stream is required")
        for o in self.stream_orders:
            bits_per_symbol(o)


@dataclass(frozen=True)
class SubframeGrid:
    """Frequency-domain content of one subframe.

    ``freq`` has shape ``(nt, n_symbols, nsc)``. The first ``n_pilot``
    symbols are pilots. ``bits[s]`` holds the data bits of stream ``s`` with
    shape ``(n_data, nsc, bits_per_symbol)``.
    """

    config: FrameConfig
    freq: np.ndarray = field(repr=False)
    bits: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def pilot_mask(self) -> np.ndarray:
        mask = np.zeros(self.config.n_symbols, dtype=bool)
        mask[: self.config.n_pilot] = True
        return mask

    @property
    def pilots(self) -> np.ndarray:
        return self.freq[:, : self.config.n_pilot]

    @property
    def data(self) -> np.ndarray:
        return self.freq[:, self.config.n_pilot :]

    def data_bits(self, stream: int) -> np.ndarray:
        return self.bits[stream].ravel()

    def pilot_condition_number(self) -> float:
        """Worst per-subcarrier condition number of the ``nt x n_pilot`` pilot matrix."""
        p = np.moveaxis(self.pilots, -1, 0)
        s = np.linalg.svd(p, compute_uv=False)
        if p.shape[1] > p.shape[2]:
            return float("inf")
        with np.errstate(divide="ignore"):
            return float(np.max(s[:, 0] / s[:, -1]))

    def to_json(self) -> str:
        return json.dumps({
            "nt": self.config.nt,
            "nsc": self.config.nsc,
            "ncp": self.config.ncp,
            "n_pilot": self.config.n_pilot,
            "n_data": self.config.n_data,
            "orders": list(self.config.stream_orders),
            "freq": numerics.to_pairs(self.freq),
            "pilot_mask": self.pilot_mask.tolist(),
        })


PILOT_MAX_COND = 1e6


def _draw_pilots(cfg: FrameConfig, rng) -> np.ndarray:
    """Uniform constellation pilots, redrawn on subcarriers where they are degenerate.

    When ``n_pilot >= nt`` every subcarrier's ``nt x n_pilot`` pilot matrix
    is kept at condition number below :data:`PILOT_MAX_COND`, so that
    per-subcarrier channel estimation is well posed.
    """
    pilots = np.empty((cfg.nt, cfg.n_pilot, cfg.nsc), dtype=np.complex128)
    todo = np.arange(cfg.nsc)
    while todo.size:
        for s, order in enumerate(cfg.stream_orders):
            pts = constellation(order).points
            pilots[s][:, todo] = pts[rng.integers(0, order, (cfg.n_pilot, todo.size))]
        if cfg.n_pilot < cfg.nt:
            break
        sv = np.linalg.svd(np.moveaxis(pilots[:, :, todo], -1, 0), compute_uv=False)
        todo = todo[sv[:, -1] * PILOT_MAX_COND <= sv[:, 0]]
    return pilots


def build_subframe(cfg: FrameConfig, rng_seed) -> SubframeGrid:
    """Random pilots and random data bits for every stream."""
    cfg.validate()
    rng = np.random.default_rng(rng_seed)
    freq = np.empty((cfg.nt, cfg.n_symbols, cfg.nsc), dtype=np.complex128)
    if cfg.n_pilot:
        freq[:, : cfg.n_pilot] = _draw_pilots(cfg, rng)
    bits = []
    for s, order in enumerate(cfg.stream_orders):
        const = constellation(order)
        b = rng.integers(0, 2, (cfg.n_data, cfg.nsc, const.bits_per_symbol), dtype=np.int8)
        freq[s, cfg.n_pilot :] = qam_modulate(b, order).reshape(cfg.n_data, cfg.nsc)
        bits.append(b)
    freq.setflags(write=False)
    return SubframeGrid(cfg, freq, tuple(bits))


@dataclass(frozen=True)
class TimeSignal:
    """Time-domain samples, one row per antenna or stream.

    Every OFDM symbol occupies ``nsc + ncp`` consecutive samples.
    """

    samples: np.ndarray = field(repr=False)
    nsc: int
    ncp: int

    @property
    def symbol_len(self) -> int:
        return self.nsc + self.ncp

    @property
    def n_rows(self) -> int:
        return self.samples.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.samples.shape[1] // self.symbol_len

    def symbols(self) -> np.ndarray:
        """View shaped ``(rows, n_symbols, nsc + ncp)``."""
        return self.samples.reshape(self.n_rows, self.n_symbols, self.symbol_len)

    def head(self, n_symbols: int) -> "TimeSignal":
        return TimeSignal(self.samples[:, : n_symbols * self.symbol_len], self.nsc, self.ncp)


def ofdm_modulate(grid, ncp: int | None = None) -> TimeSignal:
    """IFFT each symbol and prepend its cyclic prefix.

    ``grid`` is either a :class:`SubframeGrid` or a raw array shaped
    ``(rows, n_symbols, nsc)`` together with ``ncp``.
    """
    if isinstance(grid, SubframeGrid):
        freq, ncp = grid.freq, grid.config.ncp
    else:
        freq = np.asarray(grid, dtype=np.complex128)
        if ncp is None:
            raise InvalidConfigError("ncp is required when modulating a raw array")
    nsc = freq.shape[-1]
    if not 0 <= ncp < nsc:
        raise InvalidConfigError(f"cyclic prefix {ncp} must be shorter than nsc {nsc}")
    body = numerics.ifft(freq, nsc)
    sym = np.concatenate([body[..., nsc - ncp :], body], axis=-1)
    return TimeSignal(sym.reshape(freq.shape[0], -1), nsc, ncp)


def ofdm_demodulate(sig: TimeSignal) -> np.ndarray:
    """Strip the cyclic prefix and FFT each symbol; returns ``(rows, n_symbols, nsc)``."""
    if sig.samples.shape[1] % sig.symbol_len:
        raise InvalidLengthError(
            f"{sig.samples.shape[1]} samples is not a multiple of {sig.symbol_len}"
        )
    body = sig.symbols()[..., sig.ncp :]
    return numerics.fft(body, sig.nsc)
