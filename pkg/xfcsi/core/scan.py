from __future__ import annotations

from pathlib import Path
from typing import List, Tuple

from .bundle import ENCODER_FILE, VELOCITY_FILE
from .errors import CheckpointError


def scan_runs(folder: str | Path, *, recursive: bool = True) -> List[Path]:
    """
    Directories under `folder` (itself included) holding both checkpoint
    files, sorted by path.
    """
    root = Path(folder).expanduser().resolve()
    if not root.exists():
        raise FileNotFoundError(f"Folder not found: {root}")
    if not root.is_dir():
        raise NotADirectoryError(f"Not a folder: {root}")

    candidates = [root] + (sorted(p for p in root.rglob("*") if p.is_dir()) if recursive else [])
    return [d for d in candidates if (d / ENCODER_FILE).is_file() and (d / VELOCITY_FILE).is_file()]


def find_checkpoints(path: str | Path) -> Tuple[Path, Path]:
    """
    `path` may be a run directory or the encoder checkpoint itself. A tree
    with several runs is ambiguous and rejected.
    """
    p = Path(path).expanduser()
    if p.is_file():
        if p.name != ENCODER_FILE:
            raise CheckpointError(f"expected {ENCODER_FILE} or a run directory, got {p.name}")
        vel = p.parent / VELOCITY_FILE
        if not vel.is_file():
            raise CheckpointError(f"{VELOCITY_FILE} missing next to {p}")
        return p, vel
    try:
        runs = scan_runs(p)
    except (FileNotFoundError, NotADirectoryError) as e:
        raise CheckpointError(str(e)) from e
    if not runs:
        raise CheckpointError(f"no {ENCODER_FILE}/{VELOCITY_FILE} pair under {p}")
    if len(runs) > 1 and runs[0] != p.resolve():
        listed = ", ".join(str(r) for r in runs[:5])
        raise CheckpointError(f"several runs under {p}; pick one of: {listed}")
    return runs[0] / ENCODER_FILE, runs[0] / VELOCITY_FILE
