"""Capacity-based rank adaptation with SVD precoding, and EESM link adaptation.

Power convention: ``pt`` is the total transmit power per subcarrier and
``sigma2`` the per-subcarrier noise variance, both in the frequency domain.
With ``L`` streams each stream gets ``pt / L``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import numerics
from .errors import InvalidConfigError, InvalidDimensionError, InvalidInputError
from .structnet import subcarrier_groups


def capacities(singular_values, pt: float, sigma2: float) -> np.ndarray:
    """``C_L = sum_{l<=L} log2(1 + pt/(L sigma2) lambda_l^2)`` for ``L = 1..len``."""
    lam2 = np.sort(np.asarray(singular_values, dtype=np.float64) ** 2)[::-1]
    out = np.empty(len(lam2))
    for L in range(1, len(lam2) + 1):
        out[L - 1] = np.sum(np.log2(1.0 + pt / (L * sigma2) * lam2[:L]))
    return out


def select_rank(singular_values, pt: float, sigma2: float) -> int:
    """Rank with the largest capacity; the smaller rank wins ties."""
    return int(np.argmax(capacities(singular_values, pt, sigma2))) + 1


@dataclass(frozen=True)
class RankDecision:
    rank: int
    capacities: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    precoders: np.ndarray = field(repr=False)
    subbands: tuple[slice, ...] = field(repr=False)

    def precoder_per_subcarrier(self, nsc: int) -> np.ndarray:
        """``(nsc, nt, rank)`` precoders expanded from the subband ones."""
        q = np.empty((nsc,) + self.precoders.shape[1:], dtype=np.complex128)
        for b, sl in enumerate(self.subbands):
            q[sl] = self.precoders[b]
        return q


def wideband_singular_values(h_est) -> np.ndarray:
    """Square roots of the eigenvalues of ``mean_k H(k)^H H(k)``, descending."""
    h = np.asarray(h_est, dtype=np.complex128)
    gram = np.mean(np.conj(np.swapaxes(h, -1, -2)) @ h, axis=0)
    ev = np.linalg.eigvalsh(gram)[::-1]
    return np.sqrt(np.clip(ev, 0.0, None))


def rank_adapt(h_est, pt: float, sigma2: float, subband_size: int = 84) -> RankDecision:
    """Wideband rank selection and subband SVD precoders.

    ``h_est`` is ``(nsc, nr, nt)``. The rank maximizes the capacity formula
    over the wideband singular values; the precoder of each subband is the
    first ``rank`` right singular vectors of that subband's channels
    stacked on top of each other.
    """
    h = np.asarray(h_est, dtype=np.complex128)
    if h.ndim != 3:
        raise InvalidDimensionError("h_est must be (nsc, nr, nt)")
    if pt <= 0 or sigma2 <= 0:
        raise InvalidInputError("pt and sigma2 must be positive")
    lam = wideband_singular_values(h)
    caps = capacities(lam, pt, sigma2)
    rank = int(np.argmax(caps)) + 1
    bands = tuple(subcarrier_groups(h.shape[0], subband_size))
    q = np.empty((len(bands), h.shape[2], rank), dtype=np.complex128)
    for b, sl in enumerate(bands):
        _, _, v = numerics.svd(h[sl].reshape(-1, h.shape[2]))
        q[b] = v[:, :rank]
    return RankDecision(rank, caps, lam, q, bands)


def precode(s, q) -> np.ndarray:
    """``X = Q S``. ``s`` is ``(L, ...)`` and ``q`` is ``(nt, L)``."""
    s = np.asarray(s, dtype=np.complex128)
    q = np.asarray(q, dtype=np.complex128)
    if q.shape[-1] != s.shape[0]:
        raise InvalidDimensionError(f"precoder has {q.shape[-1]} columns for {s.shape[0]} streams")
    return np.tensordot(q, s, axes=(1, 0))


def precode_grid(s_freq, q_per_sc) -> np.ndarray:
    """Per-subcarrier precoding of ``(L, n, nsc)`` with ``(nsc, nt, L)`` matrices."""
    return np.einsum("ktl,lnk->tnk", q_per_sc, s_freq)


def per_stream_sinr(h_est, rank: int, pt: float, sigma2: float) -> np.ndarray:
    """``(rank, nsc)`` SINRs ``pt/(rank sigma2) lambda_l(k)^2`` under ideal SVD precoding."""
    lam = np.linalg.svd(np.asarray(h_est, dtype=np.complex128), compute_uv=False)
    return (pt / (rank * sigma2) * lam[:, :rank] ** 2).T


def lmmse_stream_sinr(h_eff, sigma2: float, stream_power: float = 1.0) -> np.ndarray:
    """Post-LMMSE SINR ``1/[(I + p H^H H / sigma2)^-1]_ll - 1`` per stream, ``(nt, nsc)``."""
    h = np.asarray(h_eff, dtype=np.complex128)
    nt = h.shape[-1]
    a = np.eye(nt) + stream_power / sigma2 * (np.conj(np.swapaxes(h, -1, -2)) @ h)
    mse = np.real(np.diagonal(np.linalg.inv(a), axis1=-2, axis2=-1))
    return (1.0 / mse - 1.0).T


def eesm(sinrs, beta: float) -> float:
    """Exponential effective SINR mapping (linear SINRs in, linear out)."""
    s = np.asarray(sinrs, dtype=np.float64).ravel()
    if s.size == 0:
        raise InvalidInputError("EESM needs at least one SINR")
    if beta <= 0:
        raise InvalidConfigError("beta must be positive")
    return float(-beta * (logsumexp(-s / beta) - math.log(s.size)))


@dataclass(frozen=True)
class CqiRow:
    min_sinr_db: float
    modulation: int
    beta: float


@dataclass(frozen=True)
class CqiTable:
    """Rows sorted by ascending SINR threshold."""

    rows: tuple[CqiRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise InvalidConfigError("CQI table is empty")
        th = [r.min_sinr_db for r in self.rows]
        if th != sorted(th):
            raise InvalidConfigError("CQI table must be sorted by min_sinr_db")

    @classmethod
    def default(cls) -> "CqiTable":
        return cls((
            CqiRow(-math.inf, 4, 1.49),
            CqiRow(10.0, 16, 5.01),
            CqiRow(18.0, 64, 10.0),
        ))

    @classmethod
    def from_json(cls, path) -> "CqiTable":
        data = json.loads(Path(path).read_text())
        rows = data["rows"] if isinstance(data, dict) else data
        try:
            parsed = [
                CqiRow(float(r["min_sinr_db"]) if r["min_sinr_db"] is not None else -math.inf,
                       int(r["modulation"]), float(r["beta"]))
                for r in rows
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfigError(f"malformed CQI table: {exc}") from exc
        return cls(tuple(parsed))


@dataclass(frozen=True)
class McsDecision:
    sinr_eff: float
    cqi: int
    modulation: int
    beta: float


def link_adapt(sinr_eff: float, table: CqiTable) -> McsDecision:
    """Highest row whose threshold is at or below ``sinr_eff``; row 0 as the floor."""
    if not table.rows:
        raise InvalidConfigError("CQI table is empty")
    sinr_db = 10.0 * math.log10(sinr_eff) if sinr_eff > 0 else -math.inf
    cqi = 0
    for i, row in enumerate(table.rows):
        if row.min_sinr_db <= sinr_db:
            cqi = i
    row = table.rows[cqi]
    return McsDecision(sinr_eff, cqi, row.modulation, row.beta)


def select_mcs(sinrs, table: CqiTable) -> McsDecision:
    """Pick the highest row whose own-beta EESM clears its threshold."""
    for i in range(len(table.rows) - 1, -1, -1):
        row = table.rows[i]
        eff = eesm(sinrs, row.beta)
        if i == 0 or 10.0 * math.log10(max(eff, 1e-300)) >= row.min_sinr_db:
            return McsDecision(eff, i, row.modulation, row.beta)
    raise AssertionError("unreachable")
