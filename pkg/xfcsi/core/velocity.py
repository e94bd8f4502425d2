"""
Time-conditioned U-Net velocity field v(x_t, t) over channel tensors.

Every block adds an FC projection of the time embedding to its input feature
map (broadcast over space) before convolving. No normalization layers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .nn.layers import ParameterSet, conv2d, fc, sinusoidal_embed, upsample_nearest2x
from .nn.tensor import Tensor, as_tensor, concat, reshape


@dataclass
class UNetConfig:
    depth: int = 2
    base_channels: int = 32
    time_dim: int = 64
    time_scale: float = 1000.0
    normalization: str = "none"


class VelocityUNet:
    def __init__(self, cfg: UNetConfig, n_ue: int, n_bs: int, rng: np.random.Generator):
        if cfg.depth < 1:
            raise ConfigError("U-Net depth must be >= 1", field="train.unet.depth")
        if cfg.normalization != "none":
            raise ConfigError(f"unsupported normalization {cfg.normalization!r}", field="train.unet.normalization")
        div = 2 ** cfg.depth
        if n_ue % div or n_bs % div:
            raise ConfigError(
                f"channel map {n_ue}x{n_bs} is not divisible by 2^depth={div}",
                field="train.unet.depth",
            )
        self.cfg = cfg
        self.n_ue = n_ue
        self.n_bs = n_bs
        self.params = ParameterSet("velocity")
        self._build(rng)

    def _width(self, level: int) -> int:
        return self.cfg.base_channels * 2 ** level

    def _build(self, rng: np.random.Generator) -> None:
        ps, dt = self.params, self.cfg.time_dim
        ps.fc("time/fc1", rng, dt, dt)
        ps.fc("time/fc2", rng, dt, dt)
        ps.conv2d("in", rng, 2, self._width(0))

        ch = self._width(0)
        for lvl in range(self.cfg.depth):
            w = self._width(lvl)
            ps.fc(f"down{lvl}/time", rng, dt, ch)
            ps.conv2d(f"down{lvl}/conv", rng, ch, w)
            ps.conv2d(f"down{lvl}/pool", rng, w, w)
            ch = w

        wb = self._width(self.cfg.depth)
        ps.fc("mid/time1", rng, dt, ch)
        ps.conv2d("mid/conv1", rng, ch, wb)
        ps.fc("mid/time2", rng, dt, wb)
        ps.conv2d("mid/conv2", rng, wb, wb)
        ch = wb

        for lvl in reversed(range(self.cfg.depth)):
            w = self._width(lvl)
            ps.conv2d(f"up{lvl}/upconv", rng, ch, w)
            ps.fc(f"up{lvl}/time", rng, dt, 2 * w)
            ps.conv2d(f"up{lvl}/conv", rng, 2 * w, w)
            ch = w

        ps.conv2d("out", rng, ch, 2)

    def _time_embedding(self, t: np.ndarray) -> Tensor:
        dtype = self.params["time/fc1/W"].dtype
        emb = sinusoidal_embed(t * self.cfg.time_scale, self.cfg.time_dim, dtype=dtype)
        return fc(self.params, "time/fc2", fc(self.params, "time/fc1", emb))

    def _add_time(self, h: Tensor, temb: Tensor, name: str) -> Tensor:
        proj = fc(self.params, name, temb, act=False)
        return h + reshape(proj, proj.shape + (1, 1))

    def velocity(self, x_t: Union[np.ndarray, Tensor], t) -> Tensor:
        """x_t is [2, N_UE, N_BS] or [B, 2, N_UE, N_BS]; t a scalar or [B] array in [0, 1]."""
        ps = self.params
        x = as_tensor(x_t, dtype=ps["in/W"].dtype)
        single = x.ndim == 3
        if single:
            x = reshape(x, (1,) + x.shape)
        if x.shape[1:] != (2, self.n_ue, self.n_bs):
            raise ShapeError(f"state must be [2, {self.n_ue}, {self.n_bs}], got {x.shape[1:]}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
        if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
            raise DomainError("time index must lie in [0, 1]")

        temb = self._time_embedding(t)
        h = conv2d(ps, "in", x)
        skips = []
        for lvl in range(self.cfg.depth):
            h = self._add_time(h, temb, f"down{lvl}/time")
            h = conv2d(ps, f"down{lvl}/conv", h)
            skips.append(h)
            h = conv2d(ps, f"down{lvl}/pool", h, stride=2)

        h = conv2d(ps, "mid/conv1", self._add_time(h, temb, "mid/time1"))
        h = conv2d(ps, "mid/conv2", self._add_time(h, temb, "mid/time2"))

        for lvl in reversed(range(self.cfg.depth)):
            h = conv2d(ps, f"up{lvl}/upconv", upsample_nearest2x(h))
            h = concat([h, skips[lvl]], axis=1)
            h = conv2d(ps, f"up{lvl}/conv", self._add_time(h, temb, f"up{lvl}/time"))

        out = conv2d(ps, "out", h, act=False)
        return reshape(out, out.shape[1:]) if single else out

    __call__ = velocity
