"""Windowed echo-state network for time-domain stream separation.

The network input at time ``t`` is the stack of the last ``Nw`` received
sample vectors ``[y(t-Nw+1); ...; y(t)]`` (oldest lag first, all antennas
per lag, zeros before the start of the sequence). The reservoir state
follows ``s(t) = f(W s(t-1) + W_in u(t))`` with ``s(-1) = 0`` and ``f`` the
split-complex tanh. The readout maps ``z(t) = [s(t); u(t)]`` linearly to
the transmitted samples and is the only trained part.

A delay ``d`` is learned by training on inputs followed by ``d`` zero
samples against targets preceded by ``d`` zero samples, so the network
can look ``d`` samples ahead; at inference the output is advanced by
``d``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics
from .errors import InvalidConfigError, InvalidDimensionError, InvalidInputError, NotTrainedError


@dataclass(frozen=True)
class EsnConfig:
    n_neurons: int = 16
    window: int = 16
    spectral_radius: float = 0.9
    input_scale: float = 0.05
    delay_step: int = 5
    delay_max: int | None = None
    cascade_depth: int = 2
    activation: str = "tanh"
    ridge: float = 0.0

    def validate(self) -> None:
        if not 0 < self.spectral_radius < 1:
            raise InvalidConfigError("spectral radius must lie in (0, 1) for the echo state property")
        if self.n_neurons < 1 or self.window < 1 or self.cascade_depth < 1:
            raise InvalidConfigError("neuron count, window and cascade depth must be positive")
        if self.delay_step < 1:
            raise InvalidConfigError("delay step must be positive")
        if self.delay_max is not None and self.delay_max < 0:
            raise InvalidConfigError("delay_max must be non-negative")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfigError(f"unknown activation {self.activation!r}")
        if self.ridge < 0:
            raise InvalidConfigError("ridge must be non-negative")


def _split_tanh(a):
    return np.tanh(a.real) + 1j * np.tanh(a.imag)


ACTIVATIONS = {
    "tanh": _split_tanh,
    "identity": lambda a: a,
}


@dataclass
class TrainedEsn:
    """Fixed reservoir matrices plus the learned readout and delay."""

    w_in: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    config: EsnConfig
    w_out: np.ndarray | None = field(default=None, repr=False)
    delay: int = 0
    residual: float | None = None

    @property
    def n_inputs(self) -> int:
        return self.w_in.shape[1] // self.config.window

    @property
    def trained(self) -> bool:
        return self.w_out is not None

    def to_json(self) -> str:
        return json.dumps({
            "config": self.config.__dict__,
            "w_in": numerics.to_pairs(self.w_in),
            "w": numerics.to_pairs(self.w),
            "w_out": None if self.w_out is None else numerics.to_pairs(self.w_out),
            "delay": self.delay,
            "residual": self.residual,
        })

    @classmethod
    def from_json(cls, text: str) -> "TrainedEsn":
        data = json.loads(text)
        w_out = data["w_out"]
        return cls(
            w_in=numerics.from_pairs(data["w_in"]),
            w=numerics.from_pairs(data["w"]),
            config=EsnConfig(**data["config"]),
            w_out=None if w_out is None else numerics.from_pairs(w_out),
            delay=int(data["delay"]),
            residual=data["residual"],
        )


def init_reservoir(cfg: EsnConfig, n_inputs: int, seed) -> TrainedEsn:
    """Draw the fixed input and recurrent matrices.

    ``W`` is complex Gaussian rescaled to the target spectral radius;
    ``W_in`` has real and imaginary parts uniform on ``[-input_scale,
    input_scale]``.
    """
    cfg.validate()
    if n_inputs < 1:
        raise InvalidConfigError("reservoir needs at least one input signal")
    rng = np.random.default_rng(seed)
    n = cfg.n_neurons
    w = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    w *= cfg.spectral_radius / numerics.spectral_radius(w)
    shape = (n, n_inputs * cfg.window)
    w_in = cfg.input_scale * (rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape))
    return TrainedEsn(w_in=w_in, w=w, config=cfg)


def apply_window(u, window: int) -> np.ndarray:
    """Stack ``window`` consecutive samples: ``(rows, T) -> (rows * window, T)``."""
    u = np.asarray(u, dtype=np.complex128)
    if window < 1:
        raise InvalidConfigError("window must be at least 1")
    rows, t = u.shape
    padded = np.concatenate([np.zeros((rows, window - 1), dtype=u.dtype), u], axis=1)
    view = np.lib.stride_tricks.sliding_window_view(padded, window, axis=1)
    # view[r, t, k] = y_r(t - window + 1 + k); reorder to (k, r, t)
    return np.ascontiguousarray(view.transpose(2, 0, 1)).reshape(rows * window, t)


def run_states(esn: TrainedEsn, windowed, s0=None) -> np.ndarray:
    """Run the reservoir and return ``Z = [S; U]`` of shape ``(Nn + Nr*Nw, T)``."""
    windowed = np.asarray(windowed, dtype=np.complex128)
    if windowed.shape[0] != esn.w_in.shape[1]:
        raise InvalidDimensionError(
            f"windowed input has {windowed.shape[0]} rows, reservoir expects {esn.w_in.shape[1]}"
        )
    f = ACTIVATIONS[esn.config.activation]
    drive = esn.w_in @ windowed
    n, t_len = esn.w.shape[0], windowed.shape[1]
    states = np.empty((n, t_len), dtype=np.complex128)
    s = np.zeros(n, dtype=np.complex128) if s0 is None else np.asarray(s0, dtype=np.complex128)
    w = esn.w
    for t in range(t_len):
        s = f(w @ s + drive[:, t])
        states[:, t] = s
    return np.vstack([states, windowed])


def train_readout(z, targets, ridge: float = 0.0) -> np.ndarray:
    """Least-squares readout ``W_out = x Z^+`` (or ridge-regularized)."""
    z = np.asarray(z, dtype=np.complex128)
    targets = np.asarray(targets, dtype=np.complex128)
    if z.size == 0 or z.shape[1] == 0:
        raise InvalidInputError("state record is empty")
    if targets.shape[1] != z.shape[1]:
        raise InvalidDimensionError("targets and states must have the same number of columns")
    if ridge > 0:
        return numerics.lmmse_estimate(targets, z, ridge)
    return targets @ numerics.pseudo_inverse(z)


def readout_residual(w_out, z, targets) -> float:
    return float(np.sum(np.abs(w_out @ z - targets) ** 2))


def delay_grid(step: int, delay_max: int) -> list[int]:
    return list(range(0, delay_max + 1, step))


def learn_delay(esn: TrainedEsn, pilot_input, pilot_targets, step: int, delay_max: int,
                tie_rtol: float = 1e-9) -> tuple[int, np.ndarray, float]:
    """Grid search of the readout delay.

    Returns ``(d_hat, W_out, residual)``. Residuals within
    ``tie_rtol * ||targets||^2`` of the minimum count as ties, which are
    resolved toward the smallest delay.
    """
    if delay_max < 0:
        raise InvalidConfigError("delay_max must be non-negative")
    u = np.asarray(pilot_input, dtype=np.complex128)
    x = np.asarray(pilot_targets, dtype=np.complex128)
    if u.shape[1] != x.shape[1]:
        raise InvalidDimensionError("pilot input and targets must have equal length")
    t_len = u.shape[1]
    # states over the longest zero-extended input; shorter delays use a prefix
    u_ext = np.concatenate([u, np.zeros((u.shape[0], delay_max), dtype=u.dtype)], axis=1)
    z_full = run_states(esn, apply_window(u_ext, esn.config.window))
    results = []
    for d in delay_grid(step, delay_max):
        z = z_full[:, : t_len + d]
        target = np.concatenate([np.zeros((x.shape[0], d), dtype=x.dtype), x], axis=1)
        w_out = train_readout(z, target, esn.config.ridge)
        results.append((d, w_out, readout_residual(w_out, z, target)))
    best = min(r[2] for r in results)
    tol = tie_rtol * float(np.sum(np.abs(x) ** 2))
    return next(r for r in results if r[2] <= best + tol)


def fit_esn(esn: TrainedEsn, pilot_input, pilot_targets) -> TrainedEsn:
    """Learn delay and readout in place and return ``esn``."""
    cfg = esn.config
    delay_max = cfg.delay_max if cfg.delay_max is not None else 0
    d, w_out, res = learn_delay(esn, pilot_input, pilot_targets, cfg.delay_step, delay_max)
    esn.delay, esn.w_out, esn.residual = d, w_out, res
    return esn


def esn_equalize(esn: TrainedEsn, rx) -> np.ndarray:
    """Equalized stream samples, same length as ``rx``."""
    if not esn.trained:
        raise NotTrainedError("readout has not been trained")
    u = np.asarray(rx, dtype=np.complex128)
    d = esn.delay
    u_ext = np.concatenate([u, np.zeros((u.shape[0], d), dtype=u.dtype)], axis=1)
    z = run_states(esn, apply_window(u_ext, esn.config.window))
    return (esn.w_out @ z)[:, d:]


def train_cascade(cfg: EsnConfig, pilot_input, pilot_targets, seed, delay_max: int | None = None) -> list[TrainedEsn]:
    """Train ``cfg.cascade_depth`` reservoirs in series.

    Stage 1 maps received pilots to transmitted pilots; every later stage
    takes the previous stage's equalized pilots as input and is trained
    against the same targets.
    """
    cfg.validate()
    if delay_max is not None:
        cfg = replace(cfg, delay_max=delay_max)
    x = np.asarray(pilot_targets, dtype=np.complex128)
    seeds = numerics.seed_sequence(seed).spawn(cfg.cascade_depth)
    stages = []
    current = np.asarray(pilot_input, dtype=np.complex128)
    for ss in seeds:
        esn = fit_esn(init_reservoir(cfg, current.shape[0], ss), current, x)
        stages.append(esn)
        current = esn_equalize(esn, current)
    return stages


def cascade_equalize(stages: list[TrainedEsn], rx) -> np.ndarray:
    out = np.asarray(rx, dtype=np.complex128)
    for esn in stages:
        out = esn_equalize(esn, out)
    return out
