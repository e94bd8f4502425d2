"""
Channel matrices, spatial/angular DFT transforms, real/complex stacking and
the two channel-quality metrics.

Everything here is complex128/float64. The neural code works in float32 and
converts at its own boundary.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
import math

import numpy as np

from .errors import DomainError, ShapeError, UndefinedMetricError


class DomainTag(str, Enum):
    SPATIAL = "spatial"
    ANGULAR = "angular"


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex N_UE x N_BS channel tagged with its domain."""
    entries: np.ndarray
    domain: DomainTag = DomainTag.SPATIAL

    def __post_init__(self) -> None:
        h = np.asarray(self.entries, dtype=np.complex128)
        if h.ndim != 2:
            raise ShapeError(f"channel must be 2-D, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ShapeError("channel has non-finite entries")
        h = h.copy()
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)
        object.__setattr__(self, "domain", DomainTag(self.domain))

    @property
    def n_ue(self) -> int:
        return int(self.entries.shape[0])

    @property
    def n_bs(self) -> int:
        return int(self.entries.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_ue, self.n_bs

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries))

    @staticmethod
    def spatial(entries: np.ndarray) -> "ChannelMatrix":
        return ChannelMatrix(entries, DomainTag.SPATIAL)

    @staticmethod
    def angular(entries: np.ndarray) -> "ChannelMatrix":
        return ChannelMatrix(entries, DomainTag.ANGULAR)


@dataclass(frozen=True)
class NmseResult:
    linear: float
    db: float


@lru_cache(maxsize=32)
def _dft_cached(n: int) -> np.ndarray:
    idx = np.arange(n)
    f = np.exp(1j * 2.0 * np.pi * np.outer(idx, idx) / n) / math.sqrt(n)
    f.setflags(write=False)
    return f


def dft_matrix(n: int) -> np.ndarray:
    """
    Unitary DFT matrix, [F]_{m,k} = exp(j 2pi (m-1)(k-1) / N) / sqrt(N) with
    1-based m, k; stored 0-based so entry [m, k] uses m*k.
    """
    if int(n) != n or n < 1:
        raise ShapeError(f"DFT size must be a positive integer, got {n}")
    return _dft_cached(int(n))


def steering_vector(n: int, theta: float) -> np.ndarray:
    """Half-wavelength ULA response, a(theta)_n = exp(j pi n sin theta) / sqrt(N)."""
    idx = np.arange(n)
    return np.exp(1j * np.pi * idx * math.sin(theta)) / math.sqrt(n)


def _require(h: ChannelMatrix, tag: DomainTag) -> None:
    if h.domain != tag:
        raise DomainError(f"expected a {tag.value} channel, got {h.domain.value}")


def to_angular(h: ChannelMatrix) -> ChannelMatrix:
    _require(h, DomainTag.SPATIAL)
    f_ue = dft_matrix(h.n_ue)
    f_bs = dft_matrix(h.n_bs)
    return ChannelMatrix(f_ue.conj().T @ h.entries @ f_bs, DomainTag.ANGULAR)


def to_spatial(h_ad: ChannelMatrix) -> ChannelMatrix:
    _require(h_ad, DomainTag.ANGULAR)
    f_ue = dft_matrix(h_ad.n_ue)
    f_bs = dft_matrix(h_ad.n_bs)
    return ChannelMatrix(f_ue @ h_ad.entries @ f_bs.conj().T, DomainTag.SPATIAL)


def stack_real(h: ChannelMatrix) -> np.ndarray:
    """2 x N_UE x N_BS real tensor: slice 0 real part, slice 1 imaginary part."""
    return np.stack([h.entries.real, h.entries.imag]).astype(np.float64)


def unstack_complex(t: np.ndarray, domain: DomainTag = DomainTag.ANGULAR) -> ChannelMatrix:
    t = np.asarray(t)
    if t.ndim != 3 or t.shape[0] != 2:
        raise ShapeError(f"channel tensor must have shape 2 x N_UE x N_BS, got {t.shape}")
    t = t.astype(np.float64)
    return ChannelMatrix(t[0] + 1j * t[1], domain)


def _same_shape(a: ChannelMatrix, b: ChannelMatrix) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def nmse(h_true: ChannelMatrix, h_est: ChannelMatrix) -> NmseResult:
    """||H - H_est||_F^2 / ||H||_F^2; a perfect estimate reports -inf dB."""
    _same_shape(h_true, h_est)
    ref = float(np.sum(np.abs(h_true.entries) ** 2))
    if ref <= 0.0:
        raise UndefinedMetricError("NMSE undefined for a zero ground-truth channel")
    err = float(np.sum(np.abs(h_true.entries - h_est.entries) ** 2))
    linear = err / ref
    db = 10.0 * math.log10(linear) if linear > 0.0 else float("-inf")
    return NmseResult(linear=linear, db=db)


def cosine_similarity(h_true: ChannelMatrix, h_est: ChannelMatrix) -> float:
    """
    ||H^H H_est||_F / (||H||_F ||H_est||_F).

    Implemented as defined: perfect estimates of multi-rank channels score
    below 1 (two equal orthogonal components give 1/sqrt(2)).
    """
    _same_shape(h_true, h_est)
    n_true = h_true.frobenius()
    n_est = h_est.frobenius()
    if n_true == 0.0 or n_est == 0.0:
        raise UndefinedMetricError("cosine similarity undefined for a zero channel")
    num = float(np.linalg.norm(h_true.entries.conj().T @ h_est.entries))
    return min(1.0, num / (n_true * n_est))


def top_fraction_energy(h_ad: ChannelMatrix, frac: float = 0.05) -> float:
    """Share of ||H_ad||_F^2 carried by the strongest `frac` of angular bins."""
    if not 0.0 < frac <= 1.0:
        raise DomainError(f"frac must be in (0, 1], got {frac}")
    power = np.sort(np.abs(h_ad.entries).ravel() ** 2)[::-1]
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    n_top = max(1, int(math.ceil(frac * power.size)))
    return float(power[:n_top].sum() / total)


def clamp_db(db: float, floor: float = -100.0) -> float:
    """Tables clamp the -inf sentinel of perfect recovery."""
    return max(floor, db)
