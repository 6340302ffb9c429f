"""Synthetic MIMO multipath channel, AWGN and the Rapp power amplifier.

The received signal at antenna ``j`` is ``sum_i h[j, i] * pa(x[i]) + n[j]``.
By default ``*`` is linear convolution over the whole sample stream; a
circular variant that wraps within each OFDM symbol's ``nsc + ncp``
sample span is also available. With ``Lc <= ncp`` both reduce to
``Y(k) = H(k) X(k)`` per subcarrier once the cyclic prefix is removed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import InvalidConfigError, InvalidDimensionError, InvalidInputError
from .ofdm import TimeSignal


@dataclass(frozen=True)
class ChannelRealization:
    """Tap vectors ``taps[rx, tx, l]`` for ``l < Lc``."""

    taps: np.ndarray = field(repr=False)
    decay: float = 1.0

    @property
    def nr(self) -> int:
        return self.taps.shape[0]

    @property
    def nt(self) -> int:
        return self.taps.shape[1]

    @property
    def lc(self) -> int:
        return self.taps.shape[2]

    def frequency_response(self, nsc: int) -> np.ndarray:
        """``H(k)`` stacked as ``(nsc, nr, nt)``."""
        padded = np.zeros((self.nr, self.nt, nsc), dtype=np.complex128)
        padded[..., : self.lc] = self.taps
        return np.moveaxis(numerics.fft(padded, nsc), -1, 0)

    def to_json(self) -> str:
        return json.dumps({"decay": self.decay, "taps": numerics.to_pairs(self.taps)})

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        data = json.loads(text)
        taps = numerics.from_pairs(data["taps"])
        if taps.ndim != 3 or not np.all(np.isfinite(taps)):
            raise InvalidInputError("taps must be a finite rx x tx x Lc array")
        return cls(taps=taps, decay=float(data["decay"]))


@dataclass(frozen=True)
class PaModel:
    """Memoryless Rapp-type amplifier.

    ``exponent`` selects the outer exponent of the denominator:
    ``"half_rho"`` uses ``0.5 * rho`` and ``"inverse_two_rho"`` uses the more
    common ``1 / (2 * rho)``, which is the only one of the two that is
    monotone and saturates at ``x_sat``. ``ibo_db``, when set, rescales the
    input so its mean power sits ``ibo_db`` below ``x_sat**2`` before the
    nonlinearity, then restores the original scale.
    """

    x_sat: float = 1.0
    rho: float = 3.0
    enabled: bool = True
    ibo_db: float | None = None
    exponent: str = "half_rho"

    def __post_init__(self):
        if self.x_sat <= 0 or self.rho <= 0:
            raise InvalidConfigError("x_sat and rho must be positive")
        if self.exponent not in ("half_rho", "inverse_two_rho"):
            raise InvalidConfigError(f"unknown exponent form {self.exponent!r}")

    @property
    def outer_exponent(self) -> float:
        return 0.5 * self.rho if self.exponent == "half_rho" else 1.0 / (2.0 * self.rho)

    @property
    def peak_input(self) -> float:
        """Input amplitude at which ``|pa(x)|`` peaks (infinite if monotone)."""
        a = 2.0 * self.rho * self.outer_exponent
        if a <= 1.0:
            return float("inf")
        return self.x_sat * (a - 1.0) ** (-1.0 / (2.0 * self.rho))


PA_OFF = PaModel(enabled=False)


def rapp_pa(x, pa: PaModel):
    """``x / (1 + (|x|/x_sat)**(2 rho)) ** e`` with ``e`` per ``pa.exponent``."""
    x = np.asarray(x, dtype=np.complex128)
    if not pa.enabled:
        return x
    r = (np.abs(x) / pa.x_sat) ** (2.0 * pa.rho)
    return x / (1.0 + r) ** pa.outer_exponent


@dataclass(frozen=True)
class NoiseSpec:
    """Complex AWGN variance per time-domain sample."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise InvalidConfigError("noise variance must be non-negative")

    @classmethod
    def from_ebn0(cls, ebn0_db: float, bits_per_symbol: int, nt: int, nr: int, nsc: int) -> "NoiseSpec":
        """Time-domain variance giving per-subcarrier variance ``ebn0_to_sigma2``.

        The forward FFT is unnormalized, so white noise of variance ``s``
        per sample becomes variance ``nsc * s`` per subcarrier.
        """
        return cls(ebn0_to_sigma2(ebn0_db, bits_per_symbol, nt, nr) / nsc)


def ebn0_to_sigma2(ebn0_db: float, bits_per_symbol: int, nt: int, nr: int = 1) -> float:
    """Per-subcarrier noise variance ``nt * Es / (b * 10**(EbN0/10))`` with ``Es = 1``.

    ``nr`` does not enter: the channel has unit average power per antenna
    pair, so every receive antenna collects ``nt`` units of signal energy
    per subcarrier.
    """
    if bits_per_symbol < 1:
        raise InvalidConfigError("bits_per_symbol must be at least 1")
    return nt / (bits_per_symbol * 10.0 ** (ebn0_db / 10.0))


def generate_channel(lc: int, decay: float, nt: int, nr: int, seed, ncp: int | None = None) -> ChannelRealization:
    """Rayleigh taps with exponential power-delay profile ``exp(-l/decay)``.

    The profile is normalized to unit total power per antenna pair.
    """
    if lc < 1:
        raise InvalidConfigError("Lc must be at least 1")
    if ncp is not None and lc > ncp:
        raise InvalidConfigError(f"Lc={lc} exceeds the cyclic prefix {ncp}")
    if decay <= 0:
        raise InvalidConfigError("decay must be positive")
    profile = np.exp(-np.arange(lc) / decay)
    profile /= profile.sum()
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((nr, nt, lc)) + 1j * rng.standard_normal((nr, nt, lc))
    return ChannelRealization(taps=g * np.sqrt(profile / 2.0), decay=float(decay))


def pure_delay_channel(delay: int, nt: int = 1, nr: int = 1) -> ChannelRealization:
    """Identity MIMO channel delayed by ``delay`` samples."""
    taps = np.zeros((nr, nt, delay + 1), dtype=np.complex128)
    for j in range(min(nr, nt)):
        taps[j, j, delay] = 1.0
    return ChannelRealization(taps=taps, decay=float("inf"))


def _amplify(x: np.ndarray, pa: PaModel) -> np.ndarray:
    if not pa.enabled:
        return x
    if pa.ibo_db is None:
        return rapp_pa(x, pa)
    p_in = np.mean(np.abs(x) ** 2)
    if p_in == 0:
        return x
    gain = np.sqrt(pa.x_sat ** 2 * 10.0 ** (-pa.ibo_db / 10.0) / p_in)
    return rapp_pa(x * gain, pa) / gain


CONVOLUTIONS = ("linear", "circular")


def apply_channel(tx: TimeSignal, ch: ChannelRealization, noise: NoiseSpec, pa: PaModel, seed,
                  convolution: str = "linear") -> TimeSignal:
    """Pass ``tx`` through amplifier, multipath channel and AWGN.

    ``convolution="linear"`` runs the taps over the whole sample stream, so
    each symbol's cyclic prefix absorbs the previous symbol's tail.
    ``"circular"`` wraps the taps within every ``nsc + ncp`` symbol span
    instead. Both give ``Y(k) = H(k) X(k)`` after prefix removal whenever
    ``lc <= ncp + 1``; they differ only inside the prefix.
    """
    if convolution not in CONVOLUTIONS:
        raise InvalidConfigError(f"convolution must be one of {CONVOLUTIONS}, got {convolution!r}")
    if tx.n_rows != ch.nt:
        raise InvalidDimensionError(f"signal has {tx.n_rows} streams, channel expects {ch.nt}")
    if ch.lc > tx.symbol_len:
        raise InvalidDimensionError("channel is longer than an OFDM symbol")
    x = _amplify(tx.samples, pa).reshape(ch.nt, -1, tx.symbol_len)
    y = np.zeros((ch.nr,) + x.shape[1:], dtype=np.complex128)
    if convolution == "circular":
        for lag in range(ch.lc):
            y += np.einsum("ri,ins->rns", ch.taps[..., lag], np.roll(x, lag, axis=-1))
        y = y.reshape(ch.nr, -1)
    else:
        x = x.reshape(ch.nt, -1)
        y = y.reshape(ch.nr, -1)
        for lag in range(ch.lc):
            y[:, lag:] += ch.taps[..., lag] @ x[:, : x.shape[1] - lag]
    if noise.sigma2 > 0:
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
        y = y + np.sqrt(noise.sigma2 / 2.0) * w
    return TimeSignal(y, tx.nsc, tx.ncp)
