"""Analog DFT beam-pair search and frame-level spectral-efficiency accounting."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix, dft_matrix
from .errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BeamPair:
    f: np.ndarray
    w: np.ndarray
    f_index: int
    w_index: int
    flagged: bool = False


def beam_search(h_est: ChannelMatrix) -> BeamPair:
    """
    Exhaustive search of |w^H H f| over DFT(N_UE) x DFT(N_BS); ties go to the
    lowest (w_index, f_index). A zero channel yields the broadside pair, flagged.
    """
    f_ue, f_bs = dft_matrix(h_est.n_ue), dft_matrix(h_est.n_bs)
    gains = np.abs(f_ue.conj().T @ h_est.entries @ f_bs)
    if not np.any(gains > 0.0):
        logger.debug("beam search on a zero channel; using broadside")
        return BeamPair(f=f_bs[:, 0], w=f_ue[:, 0], f_index=0, w_index=0, flagged=True)
    w_idx, f_idx = np.unravel_index(int(np.argmax(gains)), gains.shape)
    return BeamPair(f=f_bs[:, f_idx], w=f_ue[:, w_idx], f_index=int(f_idx), w_index=int(w_idx))


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def beam_gain(w: np.ndarray, f: np.ndarray, h: ChannelMatrix) -> float:
    return float(np.abs(w.conj() @ h.entries @ f) ** 2)


def instantaneous_se(w: np.ndarray, f: np.ndarray, h_true: ChannelMatrix, snr_linear: float) -> float:
    """log2(1 + snr |w^H H f|^2) in bits/s/Hz."""
    return math.log2(1.0 + snr_linear * beam_gain(w, f, h_true))


@dataclass(frozen=True)
class FrameAccounting:
    t_f: float = 0.010
    t_ca: float = 0.0025
    bandwidth_hz: float = 120e3
    gps_bits: int = 128

    def __post_init__(self) -> None:
        if not 0.0 < self.t_ca < self.t_f:
            raise DomainError(f"frame accounting needs 0 < T_ca < T_f, got T_ca={self.t_ca}, T_f={self.t_f}")

    @property
    def gps_overhead(self) -> float:
        return self.gps_bits / (self.t_f * self.bandwidth_hz)


def pilot_based_se(rate: float, acct: FrameAccounting) -> float:
    """Data only flows after acquisition: ((T_f - T_ca) / T_f) R."""
    if rate < 0:
        raise DomainError(f"rate must be >= 0, got {rate}")
    return (acct.t_f - acct.t_ca) / acct.t_f * rate


def sensing_aided_se(rate_prev: float, rate_current: float, acct: FrameAccounting) -> float:
    """Outdated beams during acquisition, fresh beams afterwards, minus the GPS query."""
    if rate_prev < 0 or rate_current < 0:
        raise DomainError("rates must be >= 0")
    frac = acct.t_ca / acct.t_f
    return frac * rate_prev + (1.0 - frac) * rate_current - acct.gps_overhead
