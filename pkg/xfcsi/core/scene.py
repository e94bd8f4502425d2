"""
Procedural urban intersection: four corner buildings, four vehicles driving
along the two road axes, a base station near the crossing, and static users
placed on the free area.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import GenerationError
from .model import Box, Scene, Vehicle

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "xfcsi-scenegen-1"


@dataclass
class SceneConfig:
    n_users: int = 1000
    n_frames: int = 5
    frame_period: float = 0.2
    half_extent: float = 50.0
    bs_position: Tuple[float, float, float] = (2.0, -3.0, 10.0)

    n_buildings: int = 4
    building_center: float = 30.0
    building_half_size: float = 12.0
    building_jitter: float = 3.0
    building_height: Tuple[float, float] = (15.0, 35.0)

    n_vehicles: int = 4
    vehicle_speed: Tuple[float, float] = (5.0, 15.0)
    vehicle_start: float = 35.0
    lane_offset: float = 3.5

    user_margin: float = 1.0
    max_place_retries: int = 1000

    carrier_hz: float = 28e9
    reflection_coeff: float = 0.6
    scatter_coeff: float = 0.3
    min_distance: float = 1.0

    image_size: int = 32
    n_points: int = 256
    cloud_jitter: float = 0.05
    coord_noise_std: float = 0.5

    def __post_init__(self) -> None:
        self.bs_position = tuple(float(v) for v in self.bs_position)
        self.building_height = tuple(float(v) for v in self.building_height)
        self.vehicle_speed = tuple(float(v) for v in self.vehicle_speed)


def _buildings(cfg: SceneConfig, rng: np.random.Generator) -> List[Box]:
    out = []
    corners = [(1, 1), (-1, 1), (-1, -1), (1, -1)][: cfg.n_buildings]
    for sx, sy in corners:
        cx = sx * cfg.building_center + rng.uniform(-cfg.building_jitter, cfg.building_jitter)
        cy = sy * cfg.building_center + rng.uniform(-cfg.building_jitter, cfg.building_jitter)
        hx = cfg.building_half_size + rng.uniform(-cfg.building_jitter, cfg.building_jitter) / 2
        hy = cfg.building_half_size + rng.uniform(-cfg.building_jitter, cfg.building_jitter) / 2
        height = rng.uniform(*cfg.building_height)
        out.append(Box(cx - hx, cy - hy, cx + hx, cy + hy, height))
    return out


def _vehicles(cfg: SceneConfig, buildings: List[Box], rng: np.random.Generator) -> List[Vehicle]:
    out: List[Vehicle] = []
    horizon = (cfg.n_frames - 1) * cfg.frame_period
    for i in range(cfg.n_vehicles):
        along_x = i % 2 == 0
        lane = cfg.lane_offset if (i // 2) % 2 == 0 else -cfg.lane_offset
        for _ in range(cfg.max_place_retries):
            start = rng.uniform(-cfg.vehicle_start, cfg.vehicle_start)
            speed = rng.uniform(*cfg.vehicle_speed) * rng.choice([-1.0, 1.0])
            if along_x:
                v = Vehicle(position=(start, lane), velocity=(speed, 0.0))
            else:
                v = Vehicle(position=(lane, start), velocity=(0.0, speed))
            ok = True
            for t in (0.0, horizon):
                fp = v.footprint(t)
                x, y = fp.center
                if max(abs(x), abs(y)) > cfg.half_extent or any(b.contains(x, y, margin=1.0) for b in buildings):
                    ok = False
            if ok:
                out.append(v)
                break
        else:
            raise GenerationError(f"could not place vehicle {i} on a road")
    return out


def _place_users(cfg: SceneConfig, scene: Scene, rng: np.random.Generator) -> List[Tuple[float, float]]:
    users = []
    e = cfg.half_extent
    for uid in range(cfg.n_users):
        for _ in range(cfg.max_place_retries):
            x, y = rng.uniform(-e, e, size=2)
            if scene.inside_building(x, y, margin=cfg.user_margin):
                continue
            if np.hypot(x - scene.bs_position[0], y - scene.bs_position[1]) < cfg.min_distance:
                continue
            users.append((float(x), float(y)))
            break
        else:
            raise GenerationError(
                f"could not place user {uid} outside buildings after {cfg.max_place_retries} tries"
            )
    return users


def generate_scene(seed: int, cfg: SceneConfig) -> Scene:
    """Deterministic scene (frame 0) with user placements from `seed`."""
    layout_seq, user_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(layout_seq)
    buildings = _buildings(cfg, rng)
    bx, by = cfg.bs_position[:2]
    if any(b.contains(bx, by) for b in buildings):
        raise GenerationError("base station is inside a building")
    vehicles = _vehicles(cfg, buildings, rng)
    scene = Scene(
        buildings=buildings,
        vehicles=vehicles,
        bs_position=cfg.bs_position,
        frame_index=0,
        frame_period=cfg.frame_period,
        half_extent=cfg.half_extent,
    )
    scene.users = _place_users(cfg, scene, np.random.default_rng(user_seq))
    logger.debug("scene: %d buildings, %d vehicles, %d users", len(buildings), len(vehicles), len(scene.users))
    return scene
