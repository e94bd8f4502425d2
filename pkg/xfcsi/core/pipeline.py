"""
Command-level orchestration: each run_* function reads its inputs, does the
work through the library and writes its outputs plus a manifest.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bundle import ModelBundle
from .channel import cosine_similarity, nmse
from .config import RunConfig, config_to_dict
from .datafile import load_dataset, save_dataset
from .dataset import generate_dataset, split_by_user
from .errors import CheckpointError, UndefinedMetricError
from .evaluation import Report, run_benchmark as _run_benchmark
from .exporters import (
    write_history_csv,
    write_k_sweep_csv,
    write_manifest,
    write_report_json,
    write_report_xlsx,
    write_results_csv,
    write_samples_csv,
    write_trace_csv,
)
from .infer import infer_channel, trace_metrics
from .model import content_hash
from .normalize import dataset_extent, encoder_inputs
from .scan import find_checkpoints
from .scene import GENERATOR_VERSION
from .training import train

logger = logging.getLogger(__name__)


def file_hash(path: str | Path) -> str:
    return content_hash([Path(path).read_bytes()])


def _manifest(cfg: RunConfig, command: Sequence[str], **extra) -> Dict[str, object]:
    return {
        "command": list(command),
        "seed": cfg.seed,
        "generator_version": GENERATOR_VERSION,
        "normalization": cfg.train.unet.normalization,
        "config": config_to_dict(cfg),
        **extra,
    }


@dataclass
class GenerateStats:
    path: Path
    samples: int
    users: int
    frames: int
    blocked: int
    content_hash: str


def run_generate(cfg: RunConfig, out: str | Path, *, command: Sequence[str] = (), progress: bool = True) -> GenerateStats:
    ds = generate_dataset(cfg.scene, cfg.arrays.n_ue, cfg.arrays.n_bs, cfg.seed, progress=progress)
    out = Path(out)
    digest = save_dataset(out, ds)
    stats = GenerateStats(
        path=out,
        samples=len(ds),
        users=ds.n_users,
        frames=ds.n_frames,
        blocked=int(np.sum(ds.arrays["blocked"])),
        content_hash=digest,
    )
    write_manifest(out.with_name(out.stem + ".manifest.json"), _manifest(
        cfg, command, dataset=str(out), dataset_hash=digest, samples=stats.samples,
    ))
    logger.info("dataset written to %s (%d samples, hash %s)", out, stats.samples, digest)
    return stats


@dataclass
class TrainStats:
    out_dir: Path
    epochs: int
    final: Dict[str, object]
    encoder_path: Path
    velocity_path: Path
    checkpoint_hash: str
    history: List[Dict[str, object]] = field(default_factory=list)


def run_train(cfg: RunConfig, data: str | Path, out_dir: str | Path, *, command: Sequence[str] = (), progress: bool = True) -> TrainStats:
    ds = load_dataset(data)
    result = train(ds, cfg.train, cfg.seed, progress=progress)
    out = Path(out_dir)
    enc_path, vel_path = result.bundle.save(out)
    write_history_csv(result.history, out / "history.csv")
    ckpt_hash = content_hash([enc_path.read_bytes(), vel_path.read_bytes()])
    write_manifest(out, _manifest(
        cfg, command,
        dataset=str(data),
        dataset_hash=ds.content_hash(),
        checkpoint_hash=ckpt_hash,
        train_samples=int(len(result.train_idx)),
        test_samples=int(len(result.test_idx)),
        scale=result.bundle.scaler.scale,
    ))
    return TrainStats(
        out_dir=out,
        epochs=len(result.history),
        final=result.history[-1] if result.history else {},
        encoder_path=enc_path,
        velocity_path=vel_path,
        checkpoint_hash=ckpt_hash,
        history=result.history,
    )


@dataclass
class InferStats:
    index: int
    k: int
    nmse_db: Optional[float]
    cossim: Optional[float]
    encoder_calls: int
    velocity_calls: int
    trace: List[Dict[str, object]] = field(default_factory=list)


def run_infer(
    cfg: RunConfig,
    ckpt: str | Path,
    data: str | Path,
    index: int,
    *,
    k: Optional[int] = None,
    trace_path: str | Path | None = None,
) -> InferStats:
    ds = load_dataset(data)
    if not 0 <= index < len(ds):
        raise IndexError(f"sample index {index} out of range (0..{len(ds) - 1})")
    enc_path, vel_path = find_checkpoints(ckpt)
    bundle = ModelBundle.load(enc_path, vel_path, n_ue=ds.n_ue, n_bs=ds.n_bs)
    a = ds.arrays
    images, clouds, coords = encoder_inputs(
        a["images"][index:index + 1], a["clouds"][index:index + 1], a["coords"][index:index + 1],
        dataset_extent(ds.meta),
    )
    k_steps = cfg.infer.k if k is None else int(k)
    res = infer_channel(bundle, images[0], clouds[0], coords[0], k_steps, cfg.infer.integrator)
    h_true = ds.channel(index)
    try:
        err_db: Optional[float] = nmse(h_true, res.h_hat).db
        cs: Optional[float] = cosine_similarity(h_true, res.h_hat)
    except UndefinedMetricError as e:
        logger.warning("sample %d: %s", index, e)
        err_db, cs = None, None
    rows: List[Dict[str, object]] = []
    if trace_path is not None and err_db is not None:
        rows = trace_metrics(res.trace, bundle.scaler, h_true)
        write_trace_csv(rows, trace_path)
    return InferStats(
        index=index, k=k_steps, nmse_db=err_db, cossim=cs,
        encoder_calls=res.encoder_calls, velocity_calls=res.velocity_calls, trace=rows,
    )


@dataclass
class BenchStats:
    out_dir: Path
    report: Report
    outputs: List[Path] = field(default_factory=list)


def run_benchmark(
    cfg: RunConfig,
    data: str | Path,
    ckpt: str | Path | None,
    out_dir: str | Path,
    *,
    command: Sequence[str] = (),
    progress: bool = True,
) -> BenchStats:
    ds = load_dataset(data)
    train_idx, test_idx = split_by_user(ds, cfg.train.split_ratio, cfg.seed)
    bundle = None
    if ckpt is not None:
        try:
            bundle = ModelBundle.load(*find_checkpoints(ckpt), n_ue=ds.n_ue, n_bs=ds.n_bs)
        except CheckpointError as e:
            logger.warning("flow checkpoints unusable: %s", e)
    report = _run_benchmark(
        ds, train_idx, test_idx, cfg.eval, cfg.pilots, cfg.infer,
        bundle=bundle, seed=cfg.seed, progress=progress,
    )
    out = Path(out_dir)
    outputs = [out / "report.json", out / "results.csv", out / "samples.csv", out / "report.xlsx"]
    write_report_json(report, outputs[0])
    write_results_csv(report.rows, outputs[1])
    write_samples_csv(report.samples, outputs[2])
    write_report_xlsx(report, outputs[3])
    if cfg.eval.sweep == "k":
        outputs.append(out / "k_sweep.csv")
        write_k_sweep_csv(report.rows, outputs[-1])
    write_manifest(out, _manifest(
        cfg, command,
        dataset=str(data),
        dataset_hash=ds.content_hash(),
        checkpoint=None if ckpt is None else str(ckpt),
        methods=report.succeeded(),
        errors=report.errors,
    ))
    return BenchStats(out_dir=out, report=report, outputs=outputs)
