"""
DatasetFile: paired sensing/channel samples in one binary container
(magic "XFCSI-DATA-1", JSON header, little-endian packed arrays).

Samples are stored user-major: index = user_id * n_frames + frame_index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .channel import ChannelMatrix
from .errors import DatasetFormatError
from .model import PathParam, PathType, SensingSample, content_hash
from .nn.checkpoint import read_container, write_container

DATA_MAGIC = "XFCSI-DATA-1"

_PATH_TYPES = [PathType.LOS, PathType.REFLECTION, PathType.SCATTER]

REQUIRED = (
    "images", "clouds", "coords", "channels", "positions", "user_ids", "frame_index",
    "blocked", "path_count", "path_gain", "path_aod", "path_aoa", "path_length", "path_type",
)


@dataclass
class DatasetFile:
    meta: dict
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        missing = [k for k in REQUIRED if k not in self.arrays]
        if missing:
            raise DatasetFormatError(f"dataset is missing arrays: {', '.join(missing)}")
        n = len(self.arrays["images"])
        bad = [k for k in REQUIRED if len(self.arrays[k]) != n]
        if bad:
            raise DatasetFormatError(f"arrays disagree on sample count: {', '.join(bad)}")

    def __len__(self) -> int:
        return int(self.arrays["images"].shape[0])

    @property
    def n_users(self) -> int:
        return int(self.meta["n_users"])

    @property
    def n_frames(self) -> int:
        return int(self.meta["n_frames"])

    @property
    def n_ue(self) -> int:
        return int(self.meta["n_ue"])

    @property
    def n_bs(self) -> int:
        return int(self.meta["n_bs"])

    def channel(self, i: int) -> ChannelMatrix:
        return ChannelMatrix.spatial(self.arrays["channels"][i].astype(np.complex128))

    def channels(self, idx: Sequence[int]) -> List[ChannelMatrix]:
        return [self.channel(int(i)) for i in idx]

    def paths(self, i: int) -> Tuple[PathParam, ...]:
        a = self.arrays
        n = int(a["path_count"][i])
        return tuple(
            PathParam(
                gain=complex(a["path_gain"][i, j]),
                aod=float(a["path_aod"][i, j]),
                aoa=float(a["path_aoa"][i, j]),
                length=float(a["path_length"][i, j]),
                type=_PATH_TYPES[int(a["path_type"][i, j])],
            )
            for j in range(n)
        )

    def sample(self, i: int) -> SensingSample:
        if not 0 <= i < len(self):
            raise IndexError(f"sample index {i} out of range (0..{len(self) - 1})")
        a = self.arrays
        return SensingSample(
            image=a["images"][i],
            cloud=a["clouds"][i],
            coord=a["coords"][i],
            channel=self.channel(i),
            frame_index=int(a["frame_index"][i]),
            user_id=int(a["user_ids"][i]),
            position=(float(a["positions"][i, 0]), float(a["positions"][i, 1])),
            paths=self.paths(i),
            blocked=bool(a["blocked"][i]),
        )

    def los_blocked(self) -> np.ndarray:
        """Per-sample flag: no line-of-sight path survived tracing."""
        return ~np.any(self.arrays["path_type"] == _PATH_TYPES.index(PathType.LOS), axis=1)

    def index_of(self, user_id: int, frame_index: int) -> int:
        return user_id * self.n_frames + frame_index

    def user_indices(self, user_ids: Sequence[int]) -> np.ndarray:
        """Sample indices of every frame of the given users, user-major."""
        f = self.n_frames
        return np.array([u * f + k for u in user_ids for k in range(f)], dtype=np.int64)

    def content_hash(self) -> str:
        return content_hash(
            np.ascontiguousarray(self.arrays[k]).tobytes() for k in sorted(self.arrays)
        )


def pack_samples(samples: Sequence[SensingSample], meta: dict) -> DatasetFile:
    s = len(samples)
    p_max = max([len(x.paths) for x in samples] + [1])
    n_ue, n_bs = int(meta["n_ue"]), int(meta["n_bs"])
    arrays = {
        "images": np.stack([x.image for x in samples]).astype("<f4") if s else np.zeros((0, 3, 1, 1), "<f4"),
        "clouds": np.stack([x.cloud for x in samples]).astype("<f4") if s else np.zeros((0, 3, 1), "<f4"),
        "coords": np.array([x.coord for x in samples], dtype="<f4").reshape(s, 2),
        "channels": np.array([x.channel.entries for x in samples], dtype="<c8").reshape(s, n_ue, n_bs),
        "positions": np.array([x.position for x in samples], dtype="<f4").reshape(s, 2),
        "user_ids": np.array([x.user_id for x in samples], dtype="<i4"),
        "frame_index": np.array([x.frame_index for x in samples], dtype="<i4"),
        "blocked": np.array([x.blocked for x in samples], dtype="|u1"),
        "path_count": np.array([len(x.paths) for x in samples], dtype="<i4"),
        "path_gain": np.zeros((s, p_max), dtype="<c8"),
        "path_aod": np.zeros((s, p_max), dtype="<f4"),
        "path_aoa": np.zeros((s, p_max), dtype="<f4"),
        "path_length": np.zeros((s, p_max), dtype="<f4"),
        "path_type": np.full((s, p_max), -1, dtype="<i4"),
    }
    for i, x in enumerate(samples):
        for j, p in enumerate(x.paths):
            arrays["path_gain"][i, j] = p.gain
            arrays["path_aod"][i, j] = p.aod
            arrays["path_aoa"][i, j] = p.aoa
            arrays["path_length"][i, j] = p.length
            arrays["path_type"][i, j] = _PATH_TYPES.index(p.type)
    return DatasetFile(meta=dict(meta), arrays=arrays)


def save_dataset(path: str | Path, ds: DatasetFile) -> str:
    """Write the container; returns the content hash (also stored in the header)."""
    digest = ds.content_hash()
    write_container(path, DATA_MAGIC, {**ds.meta, "content_hash": digest}, ds.arrays)
    return digest


def load_dataset(path: str | Path) -> DatasetFile:
    meta, arrays = read_container(path, DATA_MAGIC, DatasetFormatError)
    stored = meta.pop("content_hash", None)
    ds = DatasetFile(meta=meta, arrays=arrays)
    if stored is not None and stored != ds.content_hash():
        raise DatasetFormatError(f"{Path(path).name}: content hash mismatch (file corrupted?)")
    return ds
