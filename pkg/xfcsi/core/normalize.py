from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channel import ChannelMatrix, DomainTag, stack_real, to_angular, to_spatial, unstack_complex
from .errors import ShapeError


@dataclass(frozen=True)
class ChannelScaler:
    """
    One dataset-level factor so stacked angular channels have unit mean
    element power. Fitted on the training split only.
    """
    scale: float = 1.0

    def to_tensor(self, h: ChannelMatrix, dtype=np.float32) -> np.ndarray:
        if h.domain != DomainTag.ANGULAR:
            h = to_angular(h)
        return (stack_real(h) * self.scale).astype(dtype)

    def to_tensors(self, channels: Iterable[ChannelMatrix], dtype=np.float32) -> np.ndarray:
        return np.stack([self.to_tensor(h, dtype) for h in channels])

    def from_tensor(self, t: np.ndarray) -> ChannelMatrix:
        """Scaled angular stack -> spatial channel."""
        return to_spatial(unstack_complex(np.asarray(t, dtype=np.float64) / self.scale))


def fit_channel_scale(channels: Sequence[ChannelMatrix]) -> ChannelScaler:
    if not channels:
        return ChannelScaler(1.0)
    power = np.mean([np.mean(np.abs(h.entries) ** 2) for h in channels])
    # stacked real/imag parts each carry half the complex element power
    power = float(power) / 2.0
    if not power > 0.0 or not np.isfinite(power):
        return ChannelScaler(1.0)
    return ChannelScaler(float(1.0 / np.sqrt(power)))


def normalize_cloud(cloud: np.ndarray, extent: float) -> np.ndarray:
    """Point cloud [..., 3, U] in meters -> float32 in roughly [-1, 1]."""
    c = np.asarray(cloud, dtype=np.float64)
    if c.ndim < 2 or c.shape[-2] != 3:
        raise ShapeError(f"point cloud must be [3, U], got {c.shape}")
    if not extent > 0:
        raise ShapeError(f"normalization extent must be > 0, got {extent}")
    return (c / extent).astype(np.float32)


def encoder_inputs(images: np.ndarray, clouds: np.ndarray, coords: np.ndarray, extent: float):
    """Batched sensing arrays as the encoder consumes them (clouds rescaled, the rest as stored)."""
    c = np.asarray(clouds, dtype=np.float64)
    if c.ndim != 3 or c.shape[1] != 3:
        raise ShapeError(f"point clouds must be [B, 3, U], got {c.shape}")
    return (
        np.asarray(images, dtype=np.float32),
        normalize_cloud(c, extent),
        np.asarray(coords, dtype=np.float32),
    )


def dataset_extent(meta: dict) -> float:
    return float(meta.get("scene", {}).get("half_extent", 50.0))
