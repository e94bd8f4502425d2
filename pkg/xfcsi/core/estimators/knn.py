"""
Inverse-distance-weighted KNN channel inference from user location.

The database keeps, per training location, the three strongest paths of each
frame averaged over the frames of that user (complex mean gain, circular
mean angles). Inference averages the neighbors' path tuples slot by slot and
rebuilds the channel with the geometric channel model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from ..channel import ChannelMatrix
from ..datafile import DatasetFile
from ..errors import ConfigError, ContractError
from ..model import PathParam, PathType, wrap_angle
from ..propagation import synth_channel
from .base import ChannelEstimator, EstimateContext, EstimateResult

logger = logging.getLogger(__name__)

N_PATHS = 3
MIN_DISTANCE = 1e-6


@dataclass
class KnnDatabase:
    locations: np.ndarray   # [N, 2]
    gains: np.ndarray       # [N, 3] complex
    aods: np.ndarray        # [N, 3]
    aoas: np.ndarray        # [N, 3]
    lengths: np.ndarray     # [N, 3]
    n_ue: int
    n_bs: int

    def __len__(self) -> int:
        return int(self.locations.shape[0])

    def paths(self, i: int) -> List[PathParam]:
        return [
            PathParam(gain=complex(self.gains[i, j]), aod=float(self.aods[i, j]),
                      aoa=float(self.aoas[i, j]), length=float(self.lengths[i, j]))
            for j in range(N_PATHS)
        ]


def circular_mean(angles: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Angle of the (weighted) resultant of unit phasors; 0 when they cancel."""
    a = np.asarray(angles, dtype=np.float64)
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=np.float64)
    s = np.sum(w * np.exp(1j * a))
    if abs(s) == 0.0:
        return 0.0
    return wrap_angle(float(np.angle(s)))


def strongest_paths(paths: Sequence[PathParam], n: int = N_PATHS) -> List[PathParam]:
    """Top-n by |gain| (stable for ties), padded with zero-gain placeholders."""
    top = sorted(paths, key=lambda p: -abs(p.gain))[:n]
    pad = [PathParam(gain=0j, aod=0.0, aoa=0.0, length=0.0, type=PathType.LOS) for _ in range(n - len(top))]
    return list(top) + pad


def summarize_location(frames: Sequence[Sequence[PathParam]]) -> List[PathParam]:
    """
    Average the per-frame top-3 tuples slot by slot. A slot is averaged only
    over frames where it holds a real path; a slot never filled stays a
    zero-gain placeholder.
    """
    ranked = [strongest_paths(f) for f in frames]
    out = []
    for j in range(N_PATHS):
        real = [r[j] for r in ranked if j < len(r) and abs(r[j].gain) > 0.0]
        if not real:
            out.append(PathParam(gain=0j, aod=0.0, aoa=0.0, length=0.0))
            continue
        out.append(PathParam(
            gain=complex(np.mean([p.gain for p in real])),
            aod=circular_mean(np.array([p.aod for p in real])),
            aoa=circular_mean(np.array([p.aoa for p in real])),
            length=float(np.mean([p.length for p in real])),
            type=real[0].type,
        ))
    return out


def knn_build(ds: DatasetFile, indices: Sequence[int]) -> KnnDatabase:
    """One entry per user among `indices`, located at the user's true position."""
    by_user: dict[int, list[int]] = {}
    for i in indices:
        by_user.setdefault(int(ds.arrays["user_ids"][i]), []).append(int(i))
    if not by_user:
        raise ContractError("KNN database needs at least one training sample")

    locs, gains, aods, aoas, lengths = [], [], [], [], []
    for user in sorted(by_user):
        idx = by_user[user]
        summary = summarize_location([ds.paths(i) for i in idx])
        locs.append(ds.arrays["positions"][idx[0]].astype(np.float64))
        gains.append([p.gain for p in summary])
        aods.append([p.aod for p in summary])
        aoas.append([p.aoa for p in summary])
        lengths.append([p.length for p in summary])
    db = KnnDatabase(
        locations=np.array(locs, dtype=np.float64),
        gains=np.array(gains, dtype=np.complex128),
        aods=np.array(aods, dtype=np.float64),
        aoas=np.array(aoas, dtype=np.float64),
        lengths=np.array(lengths, dtype=np.float64),
        n_ue=ds.n_ue,
        n_bs=ds.n_bs,
    )
    logger.info("KNN database: %d locations", len(db))
    return db


def knn_weights(distances: np.ndarray) -> np.ndarray:
    inv = 1.0 / np.maximum(np.asarray(distances, dtype=np.float64), MIN_DISTANCE)
    return inv / np.sum(inv)


def knn_neighbors(db: KnnDatabase, location, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(indices, weights) of the k nearest entries; k is clamped to the database size."""
    if len(db) == 0:
        raise ContractError("KNN database is empty")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}", field="eval.knn_k")
    if k > len(db):
        logger.warning("k=%d exceeds the database size %d; using k=%d", k, len(db), len(db))
        k = len(db)
    d = np.linalg.norm(db.locations - np.asarray(location, dtype=np.float64).reshape(1, 2), axis=1)
    order = np.argsort(d, kind="stable")[:k]
    return order, knn_weights(d[order])


def knn_paths(db: KnnDatabase, location, k: int) -> List[PathParam]:
    idx, w = knn_neighbors(db, location, k)
    out = []
    for j in range(N_PATHS):
        out.append(PathParam(
            gain=complex(np.sum(w * db.gains[idx, j])),
            aod=circular_mean(db.aods[idx, j], w),
            aoa=circular_mean(db.aoas[idx, j], w),
            length=float(np.sum(w * db.lengths[idx, j])),
        ))
    return out


def knn_infer(db: KnnDatabase, location, k: int) -> ChannelMatrix:
    return synth_channel(knn_paths(db, location, k), db.n_bs, db.n_ue)


@dataclass
class KnnEstimator:
    db: KnnDatabase
    k: int = 5
    method_id: str = "knn"
    display_name: str = "IDW KNN (location)"
    needs_pilots: bool = False

    def estimate(self, ctx: EstimateContext) -> EstimateResult:
        # queries see the noisy GPS fix, never the true position
        return EstimateResult(h=knn_infer(self.db, ctx.sample.coord, self.k))

    def estimate_many(self, contexts: Sequence[EstimateContext]) -> List[EstimateResult]:
        return [self.estimate(c) for c in contexts]


def make_estimator(db: KnnDatabase | None = None, knn_k: int = 5, **_: object) -> ChannelEstimator:
    if db is None:
        raise ContractError("the KNN estimator needs a database built from training samples")
    return KnnEstimator(db=db, k=knn_k)
