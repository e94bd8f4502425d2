from __future__ import annotations

from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Tuple
import hashlib
import math

import numpy as np

from .channel import ChannelMatrix


# -----------------------------
# Enums / Types
# -----------------------------

class Severity(str, Enum):
    ERROR = "error"
    WARN = "warn"
    INFO = "info"


class PathType(str, Enum):
    LOS = "los"
    REFLECTION = "reflection"
    SCATTER = "scatter"


# -----------------------------
# Utilities
# -----------------------------

def wrap_angle(theta: float) -> float:
    """Map to (-pi, pi]."""
    w = math.atan2(math.sin(theta), math.cos(theta))
    return math.pi if w == -math.pi else w


def content_hash(chunks: Iterable[bytes]) -> str:
    """
    Content ID for datasets and checkpoints:
      - stable across runs and platforms (bytes are little-endian packed)
      - independent of file paths
    """
    h = hashlib.blake2b(digest_size=16)
    for c in chunks:
        h.update(c)
    return h.hexdigest()


# -----------------------------
# Core models
# -----------------------------

@dataclass
class Issue:
    severity: Severity
    field: str                 # dotted config path, or "sample", "lasso", ...
    message: str               # user-facing
    subject: Optional[str] = None   # sample / method the issue belongs to
    suggestions: List[str] = field(default_factory=list)
    code: Optional[str] = None  # e.g. "out_of_range", "deep_blockage"

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["severity"] = self.severity.value
        return d


@dataclass(frozen=True)
class PathParam:
    """One propagation path; `length` is the total path length in meters."""
    gain: complex
    aod: float
    aoa: float
    length: float
    type: PathType = PathType.LOS

    def __post_init__(self) -> None:
        object.__setattr__(self, "aod", wrap_angle(self.aod))
        object.__setattr__(self, "aoa", wrap_angle(self.aoa))
        object.__setattr__(self, "type", PathType(self.type))


@dataclass(frozen=True)
class Box:
    """Axis-aligned footprint [x0, x1] x [y0, y1] with a height (meters)."""
    x0: float
    y0: float
    x1: float
    y1: float
    height: float = 20.0

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (self.x0 - margin <= x <= self.x1 + margin) and (self.y0 - margin <= y <= self.y1 + margin)

    def walls(self) -> List[Tuple[str, float, float, float]]:
        """(axis, coordinate, lo, hi): 'x' walls are x = c for y in [lo, hi]."""
        return [
            ("x", self.x0, self.y0, self.y1),
            ("x", self.x1, self.y0, self.y1),
            ("y", self.y0, self.x0, self.x1),
            ("y", self.y1, self.x0, self.x1),
        ]

    def blocks(self, p: np.ndarray, q: np.ndarray, eps: float = 1e-9) -> bool:
        """True iff the open segment p->q passes through the box interior (slab test)."""
        d = q - p
        t_lo, t_hi = 0.0, 1.0
        for lo, hi, o, dd in ((self.x0, self.x1, p[0], d[0]), (self.y0, self.y1, p[1], d[1])):
            if abs(dd) < 1e-15:
                if o <= lo + eps or o >= hi - eps:
                    return False
                continue
            a, b = (lo - o) / dd, (hi - o) / dd
            if a > b:
                a, b = b, a
            t_lo, t_hi = max(t_lo, a), min(t_hi, b)
            if t_lo >= t_hi:
                return False
        return (t_hi - t_lo) > eps and t_hi > eps and t_lo < 1.0 - eps


@dataclass(frozen=True)
class Vehicle:
    position: Tuple[float, float]       # at frame 0
    velocity: Tuple[float, float]       # m/s
    size: Tuple[float, float] = (4.5, 2.0)
    height: float = 1.6

    def at(self, t: float) -> Tuple[float, float]:
        return (self.position[0] + self.velocity[0] * t, self.position[1] + self.velocity[1] * t)

    def footprint(self, t: float) -> Box:
        cx, cy = self.at(t)
        # long side along the direction of travel
        along_x = abs(self.velocity[0]) >= abs(self.velocity[1])
        lx, ly = (self.size[0], self.size[1]) if along_x else (self.size[1], self.size[0])
        return Box(cx - lx / 2, cy - ly / 2, cx + lx / 2, cy + ly / 2, self.height)


@dataclass
class Scene:
    buildings: List[Box]
    vehicles: List[Vehicle]
    bs_position: Tuple[float, float, float]
    users: List[Tuple[float, float]] = field(default_factory=list)
    frame_index: int = 0
    frame_period: float = 0.2
    half_extent: float = 50.0

    @property
    def bs_xy(self) -> np.ndarray:
        return np.array(self.bs_position[:2], dtype=np.float64)

    def at_frame(self, frame_index: int) -> "Scene":
        return Scene(
            buildings=self.buildings,
            vehicles=self.vehicles,
            bs_position=self.bs_position,
            users=self.users,
            frame_index=frame_index,
            frame_period=self.frame_period,
            half_extent=self.half_extent,
        )

    @property
    def time(self) -> float:
        return self.frame_index * self.frame_period

    def vehicle_boxes(self) -> List[Box]:
        return [v.footprint(self.time) for v in self.vehicles]

    def inside_building(self, x: float, y: float, margin: float = 0.0) -> bool:
        return any(b.contains(x, y, margin) for b in self.buildings)


@dataclass
class SensingSample:
    image: np.ndarray          # [3, S, S] float32
    cloud: np.ndarray          # [3, U] float32, meters
    coord: np.ndarray          # [2] float32, noisy GPS
    channel: ChannelMatrix     # spatial ground truth
    frame_index: int
    user_id: int
    position: Tuple[float, float] = (0.0, 0.0)
    paths: Tuple[PathParam, ...] = ()
    blocked: bool = False
