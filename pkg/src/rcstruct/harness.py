"""Monte-Carlo BER / RawBER experiment driver.

Each subframe is self-contained: a fresh channel is drawn, optional rank
and link adaptation run on a sounding block, a subframe of ``n_pilot``
pilot and ``n_data`` data symbols is sent, every requested detector is
trained on the pilots of that same received signal, and bit errors are
counted on the data symbols only.

Seeds: subframe ``i`` of Eb/N0 point ``p`` uses
``numpy.random.SeedSequence([master_seed, p, i])``; its spawned children
feed the channel, sounding, payload, noise, reservoir and classifier
generators, so results do not depend on execution order or worker count.

Eb/N0 convention: the per-subcarrier noise variance is
``nt / (b * 10**(EbN0/10))`` with ``b`` the configured (not adapted)
bits per symbol and unit-energy symbols on each of ``nt`` antennas.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .adaptation import (CqiTable, lmmse_stream_sinr, per_stream_sinr, precode_grid,
                         rank_adapt, select_mcs)
from .baselines import estimate_csi, lmmse_detect, rcnet_equalize, stream_bits
from .channel import CONVOLUTIONS, NoiseSpec, PaModel, apply_channel, ebn0_to_sigma2, generate_channel
from .errors import InvalidConfigError, InvalidLengthError
from .numerics import seed_sequence
from .ofdm import FrameConfig, bits_per_symbol, build_subframe, ofdm_demodulate, ofdm_modulate
from .reservoir import EsnConfig, train_cascade
from .structnet import ClassifierConfig, StructDetector

DETECTORS = ("rcstruct", "rcnet", "lmmse")
ADAPT_MODES = ("none", "rank", "link", "both")
CSV_COLUMNS = ("ebn0_db", "detector", "adapt_mode", "ber", "raw_ber", "bits", "errors",
               "rank_mode", "mod_mode", "subframes", "seconds")
CSV_COMMENT = ("# ebn0 convention: per-subcarrier noise variance = nt/(b*10^(EbN0/10)), "
               "b = configured bits/symbol, unit-energy symbols per tx antenna, "
               "unit-power channel per antenna pair")


# desk-scale classifier budget; full-scale runs use the ClassifierConfig default
DESK_EPOCHS = 100


@dataclass(frozen=True)
class PaConfig:
    enabled: bool = False
    x_sat: float = 1.0
    rho: float = 3.0
    ibo_db: float | None = None
    exponent: str = "half_rho"

    def model(self) -> PaModel:
        return PaModel(self.x_sat, self.rho, self.enabled, self.ibo_db, self.exponent)


@dataclass(frozen=True)
class SimConfig:
    nt: int = 2
    nr: int = 2
    nsc: int = 64
    ncp: int = 16
    n_pilot: int = 4
    n_data: int = 16
    order: int = 16
    lc: int = 4
    decay: float = 1.0
    convolution: str = "linear"
    ebn0_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    detectors: tuple[str, ...] = DETECTORS
    pa: PaConfig = PaConfig()
    adapt: str = "none"
    subframes_per_point: int = 100
    seed: int = 0
    esn: EsnConfig = EsnConfig()
    classifier: ClassifierConfig = ClassifierConfig(epochs=DESK_EPOCHS)
    cqi_table: str | None = None
    subband_size: int = 84
    workers: int = 1

    def validate(self) -> None:
        for name in ("nt", "nr", "nsc", "ncp", "n_pilot", "lc", "subframes_per_point",
                     "subband_size", "workers"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be positive")
        if self.n_data < 1:
            raise InvalidConfigError("n_data must be positive")
        if self.lc > self.ncp:
            raise InvalidConfigError(f"lc={self.lc} exceeds ncp={self.ncp}")
        if self.convolution not in CONVOLUTIONS:
            raise InvalidConfigError(f"unknown convolution {self.convolution!r}")
        if not self.detectors:
            raise InvalidConfigError("at least one detector is required")
        for d in self.detectors:
            if d not in DETECTORS:
                raise InvalidConfigError(f"unknown detector {d!r}")
        if self.adapt not in ADAPT_MODES:
            raise InvalidConfigError(f"unknown adaptation mode {self.adapt!r}")
        if not self.ebn0_db:
            raise InvalidConfigError("ebn0_db list is empty")
        self.frame().validate()
        self.esn.validate()
        self.pa.model()

    def frame(self, n_data: int | None = None, orders=None, nt: int | None = None) -> FrameConfig:
        return FrameConfig(nt=nt or self.nt, nsc=self.nsc, ncp=self.ncp, n_pilot=self.n_pilot,
                           n_data=self.n_data if n_data is None else n_data, order=self.order,
                           orders=None if orders is None else tuple(orders))

    def cqi(self) -> CqiTable:
        return CqiTable.from_json(self.cqi_table) if self.cqi_table else CqiTable.default()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        nested = {"pa": PaConfig, "esn": EsnConfig, "classifier": ClassifierConfig}
        kwargs = _checked_kwargs(cls, data, "config")
        for key, sub in nested.items():
            if key in kwargs:
                if not isinstance(kwargs[key], dict):
                    raise InvalidConfigError(f"{key} must be an object")
                kwargs[key] = sub(**_checked_kwargs(sub, kwargs[key], key))
        for key in ("ebn0_db", "detectors"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidConfigError("config must be a JSON object")
        return cls.from_dict(data)


def _checked_kwargs(cls, data: dict, where: str) -> dict:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return dict(data)


DESK_CONFIG = SimConfig()
FULL_CONFIG = SimConfig(
    nt=4, nr=4, nsc=1024, ncp=160, n_pilot=4, n_data=16, order=16, lc=16, decay=4.0,
    ebn0_db=(0.0, 3.0, 6.0, 9.0, 12.0, 15.0), esn=EsnConfig(window=128),
    classifier=ClassifierConfig(),
)


def compute_ber(tx_bits, rx_bits) -> float:
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.shape != rx.shape:
        raise InvalidLengthError(f"bit sequences differ in length: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise InvalidLengthError("empty bit sequence")
    return float(np.count_nonzero(tx != rx)) / tx.size


def compute_raw_ber(stream_bers, bits_per_symbol_list) -> float:
    """``sum_j b_j BER_j / sum_j b_j`` over data streams."""
    bers = np.asarray(stream_bers, dtype=np.float64)
    b = np.asarray(bits_per_symbol_list, dtype=np.float64)
    if bers.size == 0 or bers.shape != b.shape:
        raise InvalidLengthError("need equal, non-empty lists of BERs and bits per symbol")
    return float(np.sum(b * bers) / np.sum(b))


@dataclass
class SubframeStats:
    """Error counts of one detector on one subframe, per stream."""

    bits: list[int]
    errors: list[int]
    orders: tuple[int, ...]
    rank: int
    seconds: float = 0.0


def _subframe_seeds(seed):
    ss = seed_sequence(seed)
    return dict(zip(("channel", "sound", "sound_noise", "frame", "noise", "esn", "clf"), ss.spawn(7)))


def run_subframe(cfg: SimConfig, ebn0_db: float, detectors=None, seed=0) -> dict[str, SubframeStats]:
    """Simulate one subframe and evaluate every detector on the same received signal."""
    if detectors is None:
        detectors = cfg.detectors
    elif isinstance(detectors, str):
        detectors = (detectors,)
    seeds = _subframe_seeds(seed)
    pa = cfg.pa.model()
    ch = generate_channel(cfg.lc, cfg.decay, cfg.nt, cfg.nr, seeds["channel"], cfg.ncp)
    sigma2 = ebn0_to_sigma2(ebn0_db, bits_per_symbol(cfg.order), cfg.nt, cfg.nr)
    noise = NoiseSpec(sigma2 / cfg.nsc)

    rank, orders, q_sc = cfg.nt, (cfg.order,) * cfg.nt, None
    if cfg.adapt != "none":
        sound = build_subframe(cfg.frame(n_data=0), seeds["sound"])
        y_sound = ofdm_demodulate(apply_channel(ofdm_modulate(sound), ch, noise, pa, seeds["sound_noise"],
                                                    cfg.convolution))
        h_est = estimate_csi(y_sound, sound.pilots, sigma2).h
        if cfg.adapt in ("rank", "both"):
            decision = rank_adapt(h_est, float(cfg.nt), sigma2, cfg.subband_size)
            rank, q_sc = decision.rank, decision.precoder_per_subcarrier(cfg.nsc)
        if cfg.adapt in ("link", "both"):
            if q_sc is not None:
                sinr = per_stream_sinr(h_est, rank, float(cfg.nt), sigma2)
            else:
                sinr = lmmse_stream_sinr(h_est, sigma2)
            table = cfg.cqi()
            orders = tuple(select_mcs(sinr[l], table).modulation for l in range(rank))
        else:
            orders = (cfg.order,) * rank

    grid = build_subframe(cfg.frame(orders=orders, nt=rank), seeds["frame"])
    streams = ofdm_modulate(grid)
    if q_sc is None:
        tx = streams
    else:
        x_freq = math.sqrt(cfg.nt / rank) * precode_grid(grid.freq, q_sc)
        tx = ofdm_modulate(x_freq, cfg.ncp)
    rx = apply_channel(tx, ch, noise, pa, seeds["noise"], cfg.convolution)

    n_p = cfg.n_pilot
    t_pilot = n_p * (cfg.nsc + cfg.ncp)
    decisions: dict[str, list[np.ndarray]] = {}
    seconds: dict[str, float] = {}

    if "lmmse" in detectors:
        t0 = time.perf_counter()
        y = ofdm_demodulate(rx)
        csi = estimate_csi(y[:, :n_p], grid.pilots, sigma2)
        decisions["lmmse"] = stream_bits(lmmse_detect(y[:, n_p:], csi), orders)
        seconds["lmmse"] = time.perf_counter() - t0

    if "rcnet" in detectors or "rcstruct" in detectors:
        t0 = time.perf_counter()
        delay_max = cfg.esn.delay_max if cfg.esn.delay_max is not None else cfg.ncp
        stages = train_cascade(cfg.esn, rx.samples[:, :t_pilot], streams.samples[:, :t_pilot],
                               seeds["esn"], delay_max=delay_max)
        xhat = rcnet_equalize(stages, rx)
        t_esn = time.perf_counter() - t0
        if "rcnet" in detectors:
            decisions["rcnet"] = stream_bits(xhat[:, n_p:], orders)
            seconds["rcnet"] = t_esn
        if "rcstruct" in detectors:
            t0 = time.perf_counter()
            det = StructDetector(cfg.classifier, orders)
            det.fit(xhat[:, :n_p], grid.pilots, sigma2, seeds["clf"])
            decisions["rcstruct"] = stream_bits(det.detect(xhat[:, n_p:]), orders)
            seconds["rcstruct"] = t_esn + time.perf_counter() - t0

    out = {}
    for name in detectors:
        bits, errs = [], []
        for s in range(rank):
            ref = grid.data_bits(s)
            got = decisions[name][s]
            bits.append(int(ref.size))
            errs.append(int(np.count_nonzero(ref != got)))
        out[name] = SubframeStats(bits, errs, orders, rank, seconds[name])
    return out


@dataclass
class PointResult:
    ebn0_db: float
    detector: str
    adapt_mode: str
    bits: int = 0
    errors: int = 0
    subframes: int = 0
    seconds: float = 0.0
    # one (bits, errors, bits_per_symbol) triple per data stream per subframe
    stream_units: list[tuple[int, int, int]] = field(default_factory=list)
    rank_hist: Counter = field(default_factory=Counter)
    mod_hist: Counter = field(default_factory=Counter)
    per_stream: dict[int, list[int]] = field(default_factory=dict)

    def add(self, st: SubframeStats) -> None:
        self.subframes += 1
        self.seconds += st.seconds
        self.bits += sum(st.bits)
        self.errors += sum(st.errors)
        self.rank_hist[st.rank] += 1
        for s, (b, e, order) in enumerate(zip(st.bits, st.errors, st.orders)):
            self.stream_units.append((b, e, bits_per_symbol(order)))
            self.mod_hist[order] += 1
            tot = self.per_stream.setdefault(s, [0, 0])
            tot[0] += b
            tot[1] += e

    @property
    def ber(self) -> float:
        return self.errors / self.bits if self.bits else float("nan")

    @property
    def ber_se(self) -> float:
        """Binomial standard error of :attr:`ber`."""
        p = self.ber
        return math.sqrt(p * (1 - p) / self.bits) if self.bits else float("nan")

    @property
    def raw_ber(self) -> float:
        if not self.stream_units:
            return float("nan")
        bers = [e / b for b, e, _ in self.stream_units]
        return compute_raw_ber(bers, [k for _, _, k in self.stream_units])

    @property
    def stream_bers(self) -> list[float]:
        """BER of each stream index aggregated over subframes."""
        return [e / b for b, e in (self.per_stream[s] for s in sorted(self.per_stream))]

    @staticmethod
    def _mode(hist: Counter):
        if not hist:
            return ""
        top = max(hist.values())
        return min(k for k, v in hist.items() if v == top)

    @property
    def rank_mode(self):
        return self._mode(self.rank_hist)

    @property
    def mod_mode(self):
        return self._mode(self.mod_hist)


@dataclass
class SweepResult:
    config: SimConfig
    points: list[PointResult] = field(default_factory=list)

    def get(self, ebn0_db: float, detector: str) -> PointResult:
        for p in self.points:
            if p.ebn0_db == ebn0_db and p.detector == detector:
                return p
        raise KeyError((ebn0_db, detector))

    def to_csv(self, timing: bool = False) -> str:
        buf = io.StringIO()
        write_csv(self.points, buf, timing=timing)
        return buf.getvalue()


def _fmt(x: float) -> str:
    return format(x, ".10g")


def csv_row(p: PointResult, timing: bool = False) -> list:
    return [_fmt(p.ebn0_db), p.detector, p.adapt_mode, _fmt(p.ber), _fmt(p.raw_ber), p.bits,
            p.errors, p.rank_mode, p.mod_mode, p.subframes, _fmt(p.seconds) if timing else ""]


def write_csv(points: Iterable[PointResult], fh, timing: bool = False, header: bool = True) -> None:
    """Write rows in the fixed column order.

    The ``seconds`` column is left empty unless ``timing`` is set, so that
    repeated runs produce identical files.
    """
    w = csv.writer(fh, lineterminator="\n")
    if header:
        fh.write(CSV_COMMENT + "\n")
        w.writerow(CSV_COLUMNS)
    for p in points:
        w.writerow(csv_row(p, timing))


def _run_one(args):
    cfg, ebn0, point_idx, sub_idx = args
    return run_subframe(cfg, ebn0, cfg.detectors, np.random.SeedSequence([cfg.seed, point_idx, sub_idx]))


def run_ber_sweep(cfg: SimConfig, on_point: Callable[[list[PointResult]], None] | None = None,
                  progress: Callable[[str], None] | None = None) -> SweepResult:
    """Loop over Eb/N0 points and subframes, aggregating per detector.

    ``on_point`` receives the finished rows of each Eb/N0 point, which lets
    callers flush partial results before a later point fails.
    """
    cfg.validate()
    result = SweepResult(cfg)
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for p_idx, ebn0 in enumerate(cfg.ebn0_db):
            rows = {d: PointResult(float(ebn0), d, cfg.adapt) for d in cfg.detectors}
            jobs = [(cfg, float(ebn0), p_idx, i) for i in range(cfg.subframes_per_point)]
            stats_iter = pool.map(_run_one, jobs) if pool else map(_run_one, jobs)
            for stats in stats_iter:
                for d, st in stats.items():
                    rows[d].add(st)
            finished = [rows[d] for d in cfg.detectors]
            result.points.extend(finished)
            if progress:
                progress(", ".join(f"{r.detector}={r.ber:.3e}" for r in finished) + f" @ {ebn0} dB")
            if on_point:
                on_point(finished)
    finally:
        if pool:
            pool.shutdown()
    return result
