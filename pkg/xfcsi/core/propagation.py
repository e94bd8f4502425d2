"""
Geometric multipath in the horizontal plane.

Paths: line of sight (blocked by buildings only), first-order specular
reflections off building walls via the image method, and one single-bounce
scatter path per vehicle. Angles are azimuths from atan2 in the global
frame: AoD points from the BS toward the first interaction, AoA from the
user toward the last one.
"""
from __future__ import annotations

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from .channel import ChannelMatrix, steering_vector
from .model import Box, PathParam, PathType, Scene

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0


def wavelength(carrier_hz: float) -> float:
    return SPEED_OF_LIGHT / carrier_hz


def _phase(length: float, lam: float) -> complex:
    return complex(np.exp(-2j * np.pi * length / lam))


def _azimuth(src: np.ndarray, dst: np.ndarray) -> float:
    d = dst - src
    return math.atan2(d[1], d[0])


def segment_clear(p: np.ndarray, q: np.ndarray, boxes: Sequence[Box]) -> bool:
    return not any(b.blocks(p, q) for b in boxes)


def mirror_point(p: np.ndarray, axis: str, c: float) -> np.ndarray:
    m = np.array(p, dtype=np.float64)
    if axis == "x":
        m[0] = 2.0 * c - m[0]
    else:
        m[1] = 2.0 * c - m[1]
    return m


def _outside_face(box: Box, axis: str, c: float, p: np.ndarray) -> bool:
    """p lies strictly on the outer side of the wall at `c`."""
    k = 0 if axis == "x" else 1
    lo = box.x0 if axis == "x" else box.y0
    return p[k] < c if c == lo else p[k] > c


def reflection_point(bs: np.ndarray, ue: np.ndarray, box: Box, axis: str, c: float, lo: float, hi: float) -> Optional[np.ndarray]:
    """Specular point on one wall, or None if the wall cannot serve both ends."""
    if not (_outside_face(box, axis, c, bs) and _outside_face(box, axis, c, ue)):
        return None
    img = mirror_point(bs, axis, c)
    k = 0 if axis == "x" else 1
    denom = ue[k] - img[k]
    if abs(denom) < 1e-12:
        return None
    s = (c - img[k]) / denom
    if not 0.0 < s < 1.0:
        return None
    p = img + s * (ue - img)
    along = p[1 - k]
    if not lo <= along <= hi:
        return None
    p[k] = c
    return p


def trace_paths(
    scene: Scene,
    user_xy,
    carrier_hz: float = 28e9,
    reflection_coeff: float = 0.6,
    scatter_coeff: float = 0.3,
    min_distance: float = 1.0,
) -> List[PathParam]:
    """All geometric paths BS -> user in the scene's current frame."""
    lam = wavelength(carrier_hz)
    bs = scene.bs_xy
    ue = np.asarray(user_xy, dtype=np.float64)
    buildings = scene.buildings
    paths: List[PathParam] = []

    # line of sight
    if segment_clear(bs, ue, buildings):
        d = max(float(np.linalg.norm(ue - bs)), min_distance)
        paths.append(PathParam(
            gain=_phase(d, lam) / d,
            aod=_azimuth(bs, ue),
            aoa=_azimuth(ue, bs),
            length=d,
            type=PathType.LOS,
        ))

    # first-order wall reflections
    for box in buildings:
        for axis, c, lo, hi in box.walls():
            p = reflection_point(bs, ue, box, axis, c, lo, hi)
            if p is None:
                continue
            if not (segment_clear(bs, p, buildings) and segment_clear(p, ue, buildings)):
                continue
            length = max(float(np.linalg.norm(p - bs) + np.linalg.norm(ue - p)), min_distance)
            paths.append(PathParam(
                gain=reflection_coeff * _phase(length, lam) / length,
                aod=_azimuth(bs, p),
                aoa=_azimuth(ue, p),
                length=length,
                type=PathType.REFLECTION,
            ))

    # vehicle scatterers
    for vb in scene.vehicle_boxes():
        v = np.array(vb.center, dtype=np.float64)
        if not (segment_clear(bs, v, buildings) and segment_clear(v, ue, buildings)):
            continue
        d1 = max(float(np.linalg.norm(v - bs)), min_distance)
        d2 = max(float(np.linalg.norm(ue - v)), min_distance)
        paths.append(PathParam(
            gain=scatter_coeff * _phase(d1 + d2, lam) / (d1 * d2),
            aod=_azimuth(bs, v),
            aoa=_azimuth(ue, v),
            length=d1 + d2,
            type=PathType.SCATTER,
        ))
    return paths


def synth_channel(paths: Sequence[PathParam], n_bs: int, n_ue: int) -> ChannelMatrix:
    """H = sum_p g_p a_UE(aoa_p) a_BS(aod_p)^H; no paths gives the zero channel."""
    h = np.zeros((n_ue, n_bs), dtype=np.complex128)
    for p in paths:
        h += p.gain * np.outer(steering_vector(n_ue, p.aoa), steering_vector(n_bs, p.aod).conj())
    if not paths:
        logger.warning("empty path list: deep-blockage sample, channel is zero")
    return ChannelMatrix.spatial(h)
