"""
Pilot observations through a hybrid array: one beamformed scalar per pilot
symbol, y_t = w_t^H H f_t + n_t, with (w_t, f_t) cycling over DFT columns.

vec() is column-major, so the sensing row of pilot t is f_t^T kron w_t^H.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .channel import ChannelMatrix, dft_matrix
from .errors import ConfigError


@dataclass
class PilotConfig:
    t_f: float = 0.010
    t_ca: float = 0.0025
    t_ce: float = 0.001
    n_sym: int = 1120
    snr_db: float = 10.0


@dataclass
class PilotObservation:
    y: np.ndarray            # [P] complex
    A: np.ndarray            # [P, N_UE * N_BS] complex
    n_ue: int
    n_bs: int
    noise_var: float = 0.0

    @property
    def n_pilots(self) -> int:
        return int(self.y.shape[0])


def pilot_count(cfg: PilotConfig) -> int:
    """P = floor((T_ca - T_ce) / T_f * N_sym)."""
    if not 0.0 < cfg.t_ce < cfg.t_ca < cfg.t_f:
        raise ConfigError(
            f"frame timing must satisfy 0 < T_ce < T_ca < T_f, got {cfg.t_ce}, {cfg.t_ca}, {cfg.t_f}",
            field="pilots.t_ca",
        )
    # the epsilon absorbs binary rounding of the decimal timings
    p = int(math.floor((cfg.t_ca - cfg.t_ce) / cfg.t_f * cfg.n_sym + 1e-9))
    if p < 1:
        raise ConfigError(f"pilot budget yields {p} pilots", field="pilots.t_ca")
    return p


def pilot_indices(n_pilots: int, n_ue: int, n_bs: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(n_pilots)
    return t % n_ue, (t // n_ue) % n_bs


def sensing_matrix(n_pilots: int, n_ue: int, n_bs: int) -> np.ndarray:
    f_ue, f_bs = dft_matrix(n_ue), dft_matrix(n_bs)
    w_idx, f_idx = pilot_indices(n_pilots, n_ue, n_bs)
    return np.stack([np.kron(f_bs[:, fi], f_ue[:, wi].conj()) for wi, fi in zip(w_idx, f_idx)])


def vec(h: ChannelMatrix) -> np.ndarray:
    return h.entries.reshape(-1, order="F")


def unvec(x: np.ndarray, n_ue: int, n_bs: int) -> np.ndarray:
    return np.asarray(x).reshape((n_ue, n_bs), order="F")


def simulate_pilots(
    h: ChannelMatrix,
    cfg: PilotConfig,
    rng: Union[np.random.Generator, int, None] = None,
    n_pilots: Optional[int] = None,
) -> PilotObservation:
    """Noise variance is set by snr_db relative to the mean noiseless pilot power of this channel."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    p = pilot_count(cfg) if n_pilots is None else int(n_pilots)
    A = sensing_matrix(p, h.n_ue, h.n_bs)
    clean = A @ vec(h)
    noise_var = 0.0
    y = clean
    if math.isfinite(cfg.snr_db):
        signal = float(np.mean(np.abs(clean) ** 2))
        noise_var = signal / 10.0 ** (cfg.snr_db / 10.0)
        if noise_var > 0.0:
            n = rng.standard_normal(p) + 1j * rng.standard_normal(p)
            y = clean + math.sqrt(noise_var / 2.0) * n
    return PilotObservation(y=y, A=A, n_ue=h.n_ue, n_bs=h.n_bs, noise_var=noise_var)
