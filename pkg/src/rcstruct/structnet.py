"""Constellation-structure classifier for the frequency domain.

After the reservoir, each equalized symbol obeys ``xhat = h * x + g`` for a
scalar effective channel ``h``. On the odd-integer grid the real part
``o`` of ``x`` takes values in ``C = {-2K-1, ..., 2K+1}``. Shifting the
2-D observation ``i = [Re xhat, Im xhat]`` by ``s * [Re h, Im h]`` moves
class ``o`` to class ``o + s``, so a single binary classifier that tells
``+1`` from ``-1`` is enough: the ratio of its two outputs at shift ``2k``
is the likelihood ratio of classes ``-2k+1`` and ``-2k-1``, and chaining
those ratios scores every class.

The imaginary axis is handled by rotating the observation by ``-j``,
which turns ``Im x`` into the real part of ``-j x`` while leaving ``h``
unchanged. This lets real-axis and imaginary-axis samples train one
classifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .errors import InvalidConfigError, InvalidInputError, InvalidStateError
from .ofdm import constellation, qam_hard_indices

AXES = ("real", "imag")


@dataclass(frozen=True)
class ShiftSet:
    order: int
    k: int
    classes: tuple[int, ...]
    shifts: tuple[int, ...]


def make_shift_set(order: int) -> ShiftSet:
    if order not in (4, 16, 64):
        raise InvalidConfigError(f"unsupported modulation order {order}")
    side = int(round(np.sqrt(order)))
    k = (side - 2) // 2
    classes = tuple(range(-2 * k - 1, 2 * k + 2, 2))
    shifts = tuple(range(-2 * k, 2 * k + 1, 2))
    return ShiftSet(order=order, k=k, classes=classes, shifts=shifts)


def decompose(xhat) -> np.ndarray:
    """Complex values to real 2-vectors ``[Re, Im]`` along a new last axis."""
    xhat = np.asarray(xhat, dtype=np.complex128)
    return np.stack([xhat.real, xhat.imag], axis=-1)


def _rotate(xhat, axis: str):
    if axis == "real":
        return xhat
    if axis == "imag":
        return -1j * xhat
    raise InvalidConfigError(f"axis must be 'real' or 'imag', got {axis!r}")


@dataclass(frozen=True)
class EffectiveChannel:
    """Scalar channel per ``(stream, subcarrier)`` between RC output and symbols."""

    h: np.ndarray = field(repr=False)

    @property
    def h_r(self) -> np.ndarray:
        return decompose(self.h)

    @property
    def h_im(self) -> np.ndarray:
        return decompose(1j * self.h)


def estimate_effective_channel(xhat_pilots, x_pilots, noise_var: float) -> EffectiveChannel:
    """Scalar LMMSE fit of ``xhat = h x`` per ``(stream, subcarrier)``.

    Both inputs are ``(nt, n_pilot, nsc)``.
    """
    xhat = np.asarray(xhat_pilots, dtype=np.complex128)
    x = np.asarray(x_pilots, dtype=np.complex128)
    if xhat.shape != x.shape or x.ndim != 3 or x.shape[1] < 1:
        raise InvalidInputError("pilot arrays must share shape (nt, n_pilot>=1, nsc)")
    if not np.any(x):
        raise InvalidInputError("pilot symbols are all zero")
    obs = np.moveaxis(xhat, 1, -1)[..., None, :]
    ref = np.moveaxis(x, 1, -1)[..., None, :]
    h = numerics.lmmse_estimate(obs, ref, noise_var)[..., 0, 0]
    return EffectiveChannel(h=h)


@dataclass
class BinarySamples:
    """Classifier inputs ``(n, 2)`` with labels ``+1`` / ``-1``."""

    inputs: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def concat(cls, parts) -> "BinarySamples":
        parts = list(parts)
        return cls(np.concatenate([p.inputs for p in parts]), np.concatenate([p.labels for p in parts]))


def build_training_set(xhat_pilots, x_pilots, eff_ch: EffectiveChannel, order: int,
                       axis: str = "real") -> BinarySamples:
    """Two labelled samples per pilot observation on one axis.

    With ``o`` the grid amplitude on ``axis``, emits
    ``i + (1 - o) h`` labelled ``+1`` and ``i + (-1 - o) h`` labelled ``-1``,
    i.e. ``2 * nt * nsc * n_pilot`` samples. ``xhat_pilots`` and
    ``x_pilots`` are ``(nt, n_pilot, nsc)`` in unit-energy scale; the
    constellation scale is divided out here.
    """
    scale = constellation(order).scale
    xhat = _rotate(np.asarray(xhat_pilots, dtype=np.complex128), axis) / scale
    o = _rotate(np.asarray(x_pilots, dtype=np.complex128), axis).real / scale
    o = np.round(o)
    i = decompose(xhat)
    h = np.broadcast_to(eff_ch.h_r[:, None, :, :], i.shape)
    pos = i + (1.0 - o)[..., None] * h
    neg = i + (-1.0 - o)[..., None] * h
    inputs = np.concatenate([pos.reshape(-1, 2), neg.reshape(-1, 2)])
    n = pos.size // 2
    labels = np.concatenate([np.ones(n), -np.ones(n)])
    return BinarySamples(inputs, labels)


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 128
    epochs: int = 800
    lr: float = 0.01
    momentum: float = 0.001
    batch_size: int = 64
    group_size: int = 84
    pool_streams: bool = True


@dataclass
class BinaryClassifier:
    """``logits = W2 tanh(W1 x + b1) + b2``; logit 0 is class +1, logit 1 is class -1."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def xavier(cls, hidden: int, rng) -> "BinaryClassifier":
        a1 = np.sqrt(6.0 / (2 + hidden))
        a2 = np.sqrt(6.0 / (hidden + 2))
        return cls(
            w1=rng.uniform(-a1, a1, (hidden, 2)),
            b1=np.zeros(hidden),
            w2=rng.uniform(-a2, a2, (2, hidden)),
            b2=np.zeros(2),
        )

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self) -> "BinaryClassifier":
        return BinaryClassifier(*(p.copy() for p in self.params()))

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.tanh(x @ self.w1.T + self.b1) @ self.w2.T + self.b2

    def log_ratio(self, x) -> np.ndarray:
        """``log f(+1; x) - log f(-1; x)`` under softmax outputs."""
        z = self.logits(x)
        return z[..., 0] - z[..., 1]

    def loss_and_grads(self, x, labels) -> tuple[float, list[np.ndarray]]:
        """Mean softmax cross-entropy and its gradient w.r.t. every parameter."""
        x = np.asarray(x, dtype=np.float64)
        target = (np.asarray(labels) < 0).astype(np.int64)
        n = x.shape[0]
        a = np.tanh(x @ self.w1.T + self.b1)
        z = a @ self.w2.T + self.b2
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        loss = -float(np.mean(logp[np.arange(n), target]))
        dz = np.exp(logp)
        dz[np.arange(n), target] -= 1.0
        dz /= n
        dw2 = dz.T @ a
        db2 = dz.sum(axis=0)
        da = (dz @ self.w2) * (1.0 - a * a)
        dw1 = da.T @ x
        db1 = da.sum(axis=0)
        return loss, [dw1, db1, dw2, db2]

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k).tolist() for k in ("w1", "b1", "w2", "b2")})

    @classmethod
    def from_json(cls, text: str) -> "BinaryClassifier":
        data = json.loads(text)
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in data.items()})


def train_classifier(samples: BinarySamples, epochs: int = 800, lr: float = 0.01,
                     momentum: float = 0.001, seed=0, hidden: int = 128,
                     batch_size: int = 64) -> BinaryClassifier:
    """Mini-batch SGD with momentum on softmax cross-entropy.

    Velocity follows ``v <- momentum * v + grad`` and parameters move by
    ``-lr * v``. Samples are visited in a fresh seeded permutation each
    epoch.
    """
    if len(samples) == 0:
        raise InvalidInputError("no training samples")
    rng = np.random.default_rng(seed)
    clf = BinaryClassifier.xavier(hidden, rng)
    params = clf.params()
    velocity = [np.zeros_like(p) for p in params]
    x, y = samples.inputs, samples.labels
    n = len(y)
    bs = min(batch_size, n)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            _, grads = clf.loss_and_grads(x[idx], y[idx])
            for p, v, g in zip(params, velocity, grads):
                v *= momentum
                v += g
                p -= lr * v
    return clf


def class_scores(log_ratios) -> np.ndarray:
    """Log-posteriors (up to a constant) from the per-shift log ratios.

    ``log_ratios[..., j]`` belongs to shift index ``k = j - K``. Column
    ``c`` of the result scores class ``2c - 2K - 1``, i.e. ascending
    order ``-2K-1, ..., 2K+1``. The lowest class has score 0 and class
    ``-2k+1`` scores ``sum_{k'=k}^{K} log_ratio(k')``.
    """
    lr = np.asarray(log_ratios, dtype=np.float64)
    # class -2k+1 for k = K..-K is ascending; its score is the suffix sum from k
    suffix = np.cumsum(lr[..., ::-1], axis=-1)
    zero = np.zeros(lr.shape[:-1] + (1,))
    return np.concatenate([zero, suffix], axis=-1)


def _tie_priority(classes) -> np.ndarray:
    """Permutation putting classes in tie-break order: small |c| first, negative first."""
    return np.array(sorted(range(len(classes)), key=lambda c: (abs(classes[c]), classes[c])))


def pick_class(scores, classes) -> np.ndarray:
    pri = _tie_priority(classes)
    best = np.argmax(np.asarray(scores)[..., pri], axis=-1)
    return np.asarray(classes)[pri][best]


def classify_symbol(i_vec, h_vec, shift_set: ShiftSet, classifier) -> np.ndarray:
    """Grid amplitude on one axis for every observation.

    ``i_vec`` and ``h_vec`` are ``(..., 2)`` and already rotated for the
    axis being decided. ``classifier`` is a :class:`BinaryClassifier` or
    any callable returning log ratios for ``(n, 2)`` inputs.
    """
    i_vec = np.asarray(i_vec, dtype=np.float64)
    h_vec = np.broadcast_to(np.asarray(h_vec, dtype=np.float64), i_vec.shape)
    log_ratio = classifier.log_ratio if hasattr(classifier, "log_ratio") else classifier
    ks = np.arange(-shift_set.k, shift_set.k + 1)
    shifted = i_vec[..., None, :] + 2.0 * ks[:, None] * h_vec[..., None, :]
    lr = log_ratio(shifted.reshape(-1, 2)).reshape(shifted.shape[:-1])
    return pick_class(class_scores(lr), shift_set.classes)


def subcarrier_groups(nsc: int, group_size: int) -> list[slice]:
    """Consecutive subcarrier groups; the last one takes the remainder."""
    if group_size < 1:
        raise InvalidConfigError("group size must be positive")
    return [slice(s, min(s + group_size, nsc)) for s in range(0, nsc, group_size)]


@dataclass
class StructDetector:
    """Per-subframe classifier bank plus effective-channel estimates.

    One classifier is trained per subcarrier group and, when
    ``pool_streams`` is set, shared by all streams of equal modulation
    order; otherwise each stream gets its own.
    """

    config: ClassifierConfig
    orders: tuple[int, ...]
    eff_ch: EffectiveChannel | None = None
    classifiers: dict = field(default_factory=dict)

    def _key(self, group: int, stream: int):
        return (group, self.orders[stream]) if self.config.pool_streams else (group, stream)

    def fit(self, xhat_pilots, x_pilots, noise_var: float, seed=0) -> "StructDetector":
        xhat = np.asarray(xhat_pilots, dtype=np.complex128)
        x = np.asarray(x_pilots, dtype=np.complex128)
        nsc = x.shape[-1]
        self.eff_ch = estimate_effective_channel(xhat, x, noise_var)
        groups = subcarrier_groups(nsc, self.config.group_size)
        keys = {}
        for g, sl in enumerate(groups):
            for s in range(x.shape[0]):
                keys.setdefault(self._key(g, s), []).append((s, sl))
        seeds = numerics.seed_sequence(seed).spawn(len(keys))
        self.classifiers = {}
        for ss, (key, members) in zip(seeds, sorted(keys.items())):
            parts = []
            for s, sl in members:
                ch = EffectiveChannel(self.eff_ch.h[s : s + 1, sl])
                for axis in AXES:
                    parts.append(build_training_set(
                        xhat[s : s + 1, :, sl], x[s : s + 1, :, sl], ch, self.orders[s], axis))
            cfg = self.config
            self.classifiers[key] = train_classifier(
                BinarySamples.concat(parts), cfg.epochs, cfg.lr, cfg.momentum, ss,
                cfg.hidden, cfg.batch_size)
        return self

    def detect(self, xhat_data) -> np.ndarray:
        """Detected unit-energy symbols with the shape of ``xhat_data`` ``(nt, n, nsc)``."""
        return detect_subframe(xhat_data, self.eff_ch, self.orders, self.classifiers,
                               self.config.group_size, self._key)


def detect_subframe(xhat_data, eff_ch: EffectiveChannel, orders, classifiers: dict,
                    group_size: int, key_fn=None) -> np.ndarray:
    """Classify both axes of every data symbol and rebuild the QAM points."""
    if eff_ch is None:
        raise InvalidStateError("effective channel has not been estimated")
    xhat = np.asarray(xhat_data, dtype=np.complex128)
    nt, _, nsc = xhat.shape
    key_fn = key_fn or (lambda g, s: (g, orders[s]))
    out = np.empty_like(xhat)
    for g, sl in enumerate(subcarrier_groups(nsc, group_size)):
        for s in range(nt):
            clf = classifiers.get(key_fn(g, s))
            if clf is None:
                raise InvalidStateError(f"no classifier for group {g}, stream {s}")
            const = constellation(orders[s])
            shift_set = make_shift_set(orders[s])
            h = decompose(eff_ch.h[s, sl])[None, :, :]
            y = xhat[s, :, sl] / const.scale
            o_r = classify_symbol(decompose(y), h, shift_set, clf)
            o_i = classify_symbol(decompose(-1j * y), h, shift_set, clf)
            out[s, :, sl] = (o_r + 1j * o_i) * const.scale
    return out


def symbols_to_bits(symbols, order: int) -> np.ndarray:
    """Bits of constellation points (exact points map to their own labels)."""
    const = constellation(order)
    return const.bit_map[qam_hard_indices(symbols, order).ravel()].ravel()
