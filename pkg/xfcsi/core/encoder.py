"""
Multimodal stochastic encoder: image + point cloud + coordinate -> a
per-element Gaussian over channel-tensor-shaped latents.

Three branches produce one d-dim token each (CNN, PointNet, sinusoidal MLP),
a self-attention block fuses them, an FC maps the fused vector onto a
2 x N_UE x N_BS map and two linear conv heads emit mu and sigma_log.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, ShapeError
from .nn.layers import (
    ParameterSet,
    attention_fuse,
    conv1d,
    conv2d,
    fc,
    global_maxpool,
    init_attention,
    sinusoidal_embed,
)
from .nn.tensor import DEFAULT_DTYPE, Tensor, as_tensor, concat, exp, reshape, stack

SIGMA_LOG_BIAS = -2.0

ArrayOrTensor = Union[np.ndarray, Tensor]


@dataclass
class EncoderConfig:
    image_size: int = 32
    image_channels: int = 3
    cnn_base: int = 16
    point_widths: Tuple[int, int, int] = (32, 64, 128)
    coord_embed_dim: int = 64
    feature_dim: int = 128
    heads: int = 4

    def __post_init__(self) -> None:
        self.point_widths = tuple(int(w) for w in self.point_widths)


@dataclass
class LatentGaussian:
    """mu and sigma_log = log sigma^2, both [B, 2, N_UE, N_BS] (or unbatched)."""
    mu: Tensor
    sigma_log: Tensor

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.sigma_log.data)

    def __getitem__(self, i) -> "LatentGaussian":
        return LatentGaussian(self.mu[i], self.sigma_log[i])


class MultimodalEncoder:
    def __init__(self, cfg: EncoderConfig, n_ue: int, n_bs: int, rng: np.random.Generator):
        if len(cfg.point_widths) != 3:
            raise ConfigError("point_widths needs exactly three entries", field="train.encoder.point_widths")
        if cfg.image_size % 8:
            raise ConfigError(f"image_size {cfg.image_size} is not divisible by 8", field="train.encoder.image_size")
        if cfg.coord_embed_dim % 4:
            raise ConfigError("coord_embed_dim must be divisible by 4", field="train.encoder.coord_embed_dim")
        if cfg.feature_dim % cfg.heads:
            raise ConfigError(
                f"feature_dim {cfg.feature_dim} is not divisible by heads {cfg.heads}",
                field="train.encoder.heads",
            )
        self.cfg = cfg
        self.n_ue = n_ue
        self.n_bs = n_bs
        self.params = ParameterSet("encoder")
        self._build(rng)

    def _build(self, rng: np.random.Generator) -> None:
        c, ps, d = self.cfg, self.params, self.cfg.feature_dim
        b = c.cnn_base
        ps.conv2d("cnn/conv1", rng, c.image_channels, b)
        ps.conv2d("cnn/conv2", rng, b, 2 * b)
        ps.conv2d("cnn/conv3", rng, 2 * b, 4 * b)
        side = c.image_size // 8
        ps.fc("cnn/fc", rng, 4 * b * side * side, d)

        w1, w2, w3 = c.point_widths
        ps.conv1d("pointnet/conv1", rng, 3, w1)
        ps.conv1d("pointnet/conv2", rng, w1, w2)
        ps.conv1d("pointnet/conv3", rng, w2, w3)
        ps.fc("pointnet/fc", rng, w3, d)

        ps.fc("coord/fc1", rng, c.coord_embed_dim, d)
        ps.fc("coord/fc2", rng, d, d)

        init_attention(ps, "fuse", rng, d)
        ps.fc("head/fc", rng, 3 * d, 2 * self.n_ue * self.n_bs)
        ps.conv2d("head/mu", rng, 2, 2)
        ps.conv2d("head/sigma_log", rng, 2, 2)
        ps["head/sigma_log/b"].data[:] = SIGMA_LOG_BIAS

    # --- branches -----------------------------------------------------
    def _image_token(self, image: Tensor) -> Tensor:
        ps = self.params
        h = conv2d(ps, "cnn/conv1", image, stride=2)
        h = conv2d(ps, "cnn/conv2", h, stride=2)
        h = conv2d(ps, "cnn/conv3", h, stride=2)
        return fc(ps, "cnn/fc", reshape(h, (h.shape[0], -1)))

    def _cloud_token(self, cloud: Tensor) -> Tensor:
        ps = self.params
        h = conv1d(ps, "pointnet/conv1", cloud)
        h = conv1d(ps, "pointnet/conv2", h)
        h = conv1d(ps, "pointnet/conv3", h)
        return fc(ps, "pointnet/fc", global_maxpool(h))

    def _coord_token(self, coord: np.ndarray) -> Tensor:
        half = self.cfg.coord_embed_dim // 2
        dtype = self.params["coord/fc1/W"].dtype
        emb = concat([
            sinusoidal_embed(coord[:, 0], half, dtype=dtype),
            sinusoidal_embed(coord[:, 1], half, dtype=dtype),
        ], axis=1)
        h = fc(self.params, "coord/fc1", emb)
        return fc(self.params, "coord/fc2", h)

    def _check(self, image: Tensor, cloud: Tensor, coord: np.ndarray) -> None:
        s, ch = self.cfg.image_size, self.cfg.image_channels
        if image.shape[1:] != (ch, s, s):
            raise ShapeError(f"image must be [{ch}, {s}, {s}], got {image.shape[1:]}")
        if cloud.ndim != 3 or cloud.shape[1] != 3:
            raise ShapeError(f"point cloud must be [3, U], got {cloud.shape[1:]}")
        if coord.ndim != 2 or coord.shape[1] != 2:
            raise ShapeError(f"coordinate must be a 2-vector, got {coord.shape[1:]}")
        if not image.shape[0] == cloud.shape[0] == coord.shape[0]:
            raise ShapeError("image, cloud and coordinate batch sizes differ")

    def encode(
        self,
        image: ArrayOrTensor,
        cloud: ArrayOrTensor,
        coord: ArrayOrTensor,
        attn_weights: Optional[list] = None,
    ) -> LatentGaussian:
        """Accepts single samples ([3,H,W], [3,U], [2]) or batches with a leading axis."""
        dtype = self.params["cnn/conv1/W"].dtype
        image = as_tensor(image, dtype=dtype)
        cloud = as_tensor(cloud, dtype=dtype)
        coord_np = np.asarray(coord.data if isinstance(coord, Tensor) else coord, dtype=np.float64)
        single = image.ndim == 3
        if single:
            image = reshape(image, (1,) + image.shape)
            cloud = reshape(cloud, (1,) + cloud.shape)
            coord_np = coord_np.reshape(1, -1)
        self._check(image, cloud, coord_np)

        tokens = stack([self._image_token(image), self._cloud_token(cloud), self._coord_token(coord_np)], axis=1)
        fused = attention_fuse(self.params, "fuse", tokens, self.cfg.heads, weights_out=attn_weights)
        fmap = reshape(fc(self.params, "head/fc", fused), (-1, 2, self.n_ue, self.n_bs))
        mu = conv2d(self.params, "head/mu", fmap, act=False)
        sigma_log = conv2d(self.params, "head/sigma_log", fmap, act=False)
        if single:
            mu = reshape(mu, mu.shape[1:])
            sigma_log = reshape(sigma_log, sigma_log.shape[1:])
        return LatentGaussian(mu, sigma_log)

    __call__ = encode


def sample_latent(g: LatentGaussian, eps: ArrayOrTensor) -> Tensor:
    """Reparameterized draw x0 = mu + exp(0.5 sigma_log) * eps."""
    eps = as_tensor(eps, dtype=g.mu.dtype)
    if eps.shape != g.mu.shape:
        raise ShapeError(f"eps shape {eps.shape} does not match mu {g.mu.shape}")
    return g.mu + exp(g.sigma_log * 0.5) * eps


def map_mode(g: LatentGaussian) -> Tensor:
    return g.mu


def standard_normal_like(g: LatentGaussian, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(g.mu.shape).astype(g.mu.dtype)
