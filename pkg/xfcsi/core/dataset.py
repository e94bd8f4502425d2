"""
Dataset generation (users x frames, per-user derived seeds) and the
user-level train/test split.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from typing import List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .datafile import DatasetFile, pack_samples
from .errors import ConfigError
from .model import Box, Scene, SensingSample, Vehicle
from .paths import thread_cap
from .propagation import synth_channel, trace_paths
from .scene import GENERATOR_VERSION, SceneConfig, generate_scene
from .sensing import render_sensing

logger = logging.getLogger(__name__)


def _user_samples(
    scene: Scene,
    user_id: int,
    cfg: SceneConfig,
    n_ue: int,
    n_bs: int,
    seed_seq: np.random.SeedSequence,
) -> List[SensingSample]:
    rng = np.random.default_rng(seed_seq)
    pos = scene.users[user_id]
    out = []
    for k in range(cfg.n_frames):
        frame = scene.at_frame(k)
        paths = trace_paths(
            frame, pos,
            carrier_hz=cfg.carrier_hz,
            reflection_coeff=cfg.reflection_coeff,
            scatter_coeff=cfg.scatter_coeff,
            min_distance=cfg.min_distance,
        )
        image, cloud, coord = render_sensing(
            frame, pos, rng,
            image_size=cfg.image_size,
            n_points=cfg.n_points,
            cloud_jitter=cfg.cloud_jitter,
            coord_noise_std=cfg.coord_noise_std,
        )
        out.append(SensingSample(
            image=image,
            cloud=cloud,
            coord=coord,
            channel=synth_channel(paths, n_bs, n_ue),
            frame_index=k,
            user_id=user_id,
            position=pos,
            paths=tuple(paths),
            blocked=not paths,
        ))
    return out


def _user_job(args) -> List[SensingSample]:
    return _user_samples(*args)


def generate_dataset(
    cfg: SceneConfig,
    n_ue: int,
    n_bs: int,
    seed: int,
    *,
    progress: bool = True,
    workers: Optional[int] = None,
) -> DatasetFile:
    """users x frames samples, deterministic in (seed, cfg, generator version)."""
    if cfg.n_users < 1 or cfg.n_frames < 1:
        raise ConfigError("dataset needs at least one user and one frame", field="scene.n_users")
    scene_seq, render_seq = np.random.SeedSequence(seed).spawn(2)
    scene = generate_scene(int(scene_seq.generate_state(1)[0]), cfg)
    user_seqs = render_seq.spawn(cfg.n_users)
    jobs = [(scene, u, cfg, n_ue, n_bs, user_seqs[u]) for u in range(cfg.n_users)]

    workers = workers or thread_cap()
    samples: List[SensingSample] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            it = pool.map(_user_job, jobs, chunksize=max(1, len(jobs) // (4 * workers)))
            for per_user in tqdm(it, total=len(jobs), desc="users", disable=not progress):
                samples.extend(per_user)
    else:
        for job in tqdm(jobs, desc="users", disable=not progress):
            samples.extend(_user_job(job))

    blocked = sum(1 for s in samples if s.blocked)
    if blocked:
        logger.warning("%d of %d samples have no propagation path (deep blockage)", blocked, len(samples))

    meta = {
        "generator_version": GENERATOR_VERSION,
        "seed": int(seed),
        "n_users": cfg.n_users,
        "n_frames": cfg.n_frames,
        "n_ue": n_ue,
        "n_bs": n_bs,
        "scene": asdict(cfg),
        "buildings": [asdict(b) for b in scene.buildings],
        "vehicles": [asdict(v) for v in scene.vehicles],
    }
    ds = pack_samples(samples, meta)
    logger.info("generated %d samples (%d users x %d frames), LoS blocked in %.1f%%",
                len(ds), cfg.n_users, cfg.n_frames, 100.0 * float(np.mean(ds.los_blocked())))
    return ds


def scene_from_meta(meta: dict) -> Scene:
    """Rebuild the frame-0 scene stored in a dataset header."""
    cfg = SceneConfig(**meta["scene"])
    return Scene(
        buildings=[Box(**b) for b in meta["buildings"]],
        vehicles=[Vehicle(position=tuple(v["position"]), velocity=tuple(v["velocity"]),
                          size=tuple(v["size"]), height=v["height"]) for v in meta["vehicles"]],
        bs_position=cfg.bs_position,
        frame_period=cfg.frame_period,
        half_extent=cfg.half_extent,
    )


def split_by_user(ds: DatasetFile, ratio: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Train/test sample indices with every frame of a user on the same side."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}", field="train.split_ratio")
    users = np.random.default_rng(seed).permutation(ds.n_users)
    n_train = int(round(ratio * ds.n_users))
    n_train = min(max(n_train, 1), ds.n_users - 1) if ds.n_users > 1 else ds.n_users
    train_users = np.sort(users[:n_train])
    test_users = np.sort(users[n_train:])
    return ds.user_indices(train_users), ds.user_indices(test_users)
