"""
Sensing modalities rendered from a scene frame: a top-down occupancy image,
a point cloud of BS-visible surfaces and a noisy GPS coordinate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .model import Box, Scene
from .propagation import segment_clear

JITTER_CLIP = 3.0


@dataclass(frozen=True)
class Surface:
    """Vertical wall segment p -> q with a height."""
    p: Tuple[float, float]
    q: Tuple[float, float]
    height: float

    @property
    def length(self) -> float:
        return math.hypot(self.q[0] - self.p[0], self.q[1] - self.p[1])


def _cell_range(lo: float, hi: float, extent: float, size: int) -> Tuple[int, int]:
    cell = 2.0 * extent / size
    a = int(math.floor((lo + extent) / cell))
    b = int(math.ceil((hi + extent) / cell))
    return max(0, a), min(size, b)


def rasterize(boxes: Sequence[Box], extent: float, size: int) -> np.ndarray:
    """Occupancy grid, rows indexed by y, cells marked when they overlap a box."""
    grid = np.zeros((size, size), dtype=np.float32)
    for b in boxes:
        c0, c1 = _cell_range(b.x0, b.x1, extent, size)
        r0, r1 = _cell_range(b.y0, b.y1, extent, size)
        if c0 < c1 and r0 < r1:
            grid[r0:r1, c0:c1] = 1.0
    return grid


def cell_of(x: float, y: float, extent: float, size: int) -> Tuple[int, int]:
    cell = 2.0 * extent / size
    col = min(size - 1, max(0, int((x + extent) // cell)))
    row = min(size - 1, max(0, int((y + extent) // cell)))
    return row, col


def visible_surfaces(scene: Scene) -> List[Surface]:
    """Box faces that point toward the BS (buildings and vehicles of the current frame)."""
    bx, by = scene.bs_xy
    out = []
    for box in list(scene.buildings) + scene.vehicle_boxes():
        if bx < box.x0:
            out.append(Surface((box.x0, box.y0), (box.x0, box.y1), box.height))
        if bx > box.x1:
            out.append(Surface((box.x1, box.y0), (box.x1, box.y1), box.height))
        if by < box.y0:
            out.append(Surface((box.x0, box.y0), (box.x1, box.y0), box.height))
        if by > box.y1:
            out.append(Surface((box.x0, box.y1), (box.x1, box.y1), box.height))
    return out


def sample_cloud(
    scene: Scene,
    n_points: int,
    jitter: float,
    rng: np.random.Generator,
    max_tries: int = 20,
) -> np.ndarray:
    """
    [3, U] points on BS-visible surfaces, heights uniform up to the surface
    height, Gaussian jitter clipped at 3 std. No visible surface -> zeros.
    """
    surfaces = visible_surfaces(scene)
    cloud = np.zeros((3, n_points), dtype=np.float64)
    if not surfaces:
        return cloud.astype(np.float32)
    lengths = np.array([s.length for s in surfaces])
    probs = lengths / lengths.sum()
    bs = scene.bs_xy
    buildings = scene.buildings

    n = 0
    budget = n_points * max_tries
    while n < n_points and budget > 0:
        budget -= 1
        s = surfaces[rng.choice(len(surfaces), p=probs)]
        u = rng.uniform()
        xy = np.array([s.p[0] + u * (s.q[0] - s.p[0]), s.p[1] + u * (s.q[1] - s.p[1])])
        z = rng.uniform(0.0, s.height)
        if not segment_clear(bs, xy, buildings):
            continue
        cloud[:, n] = (xy[0], xy[1], z)
        n += 1
    if n < n_points:
        # fully shadowed frame: repeat the points found so far
        cloud[:, n:] = cloud[:, :max(n, 1)][:, np.arange(n_points - n) % max(n, 1)]
    noise = np.clip(rng.standard_normal(cloud.shape), -JITTER_CLIP, JITTER_CLIP) * jitter
    return (cloud + noise).astype(np.float32)


def render_image(scene: Scene, user_xy, size: int) -> np.ndarray:
    e = scene.half_extent
    img = np.zeros((3, size, size), dtype=np.float32)
    img[0] = rasterize(scene.buildings, e, size)
    img[1] = rasterize(scene.vehicle_boxes(), e, size)
    r, c = cell_of(float(user_xy[0]), float(user_xy[1]), e, size)
    img[2, r, c] = 1.0
    return img


def noisy_coordinate(user_xy, std: float, rng: np.random.Generator) -> np.ndarray:
    return (np.asarray(user_xy, dtype=np.float64) + rng.normal(0.0, std, size=2)).astype(np.float32)


def render_sensing(
    scene: Scene,
    user_xy,
    rng: np.random.Generator,
    *,
    image_size: int = 32,
    n_points: int = 256,
    cloud_jitter: float = 0.05,
    coord_noise_std: float = 0.5,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    image = render_image(scene, user_xy, image_size)
    cloud = sample_cloud(scene, n_points, cloud_jitter, rng)
    coord = noisy_coordinate(user_xy, coord_noise_std, rng)
    return image, cloud, coord
