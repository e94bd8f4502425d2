"""
Joint training of the multimodal encoder, the velocity U-Net and the
contrastive temperature with one Adam optimizer.

Each epoch is a pass over the training split without replacement (the last
partial batch is dropped); t is drawn i.i.d. per sample per step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from .bundle import ModelBundle
from .channel import nmse
from .datafile import DatasetFile
from .dataset import split_by_user
from .encoder import EncoderConfig, sample_latent, standard_normal_like
from .errors import ConfigError, ContractError, TrainingDivergedError, UndefinedMetricError
from .flow import TAU0, total_loss
from .infer import infer_batch
from .nn import backward
from .nn.optim import adam_update, init_adam, zero_grad
from .normalize import dataset_extent, encoder_inputs, fit_channel_scale
from .velocity import UNetConfig

logger = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "cfm_loss", "contrastive_loss", "kl_loss", "total", "tau", "test_nmse_db")


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 300
    lr: float = 1e-4
    lam: float = 1e-4
    sigma_min: float = 0.0
    tau0: float = TAU0
    split_ratio: float = 0.9
    use_alignment: bool = True
    steps_per_epoch: Optional[int] = None   # None: full pass over the split
    eval_every: int = 10                     # 0: only after the last epoch
    eval_subset: int = 256
    eval_k: int = 7
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    unet: UNetConfig = field(default_factory=UNetConfig)


@dataclass
class TrainResult:
    bundle: ModelBundle
    history: List[Dict[str, object]]
    train_idx: np.ndarray
    test_idx: np.ndarray


def _check(cfg: TrainConfig) -> None:
    if cfg.batch_size < 2:
        raise ConfigError("batch_size must be >= 2 (the contrastive loss needs negatives)", field="train.batch_size")
    if cfg.epochs < 1:
        raise ConfigError("epochs must be >= 1", field="train.epochs")
    if cfg.lam < 0:
        raise ConfigError("lam must be >= 0", field="train.lam")
    if cfg.sigma_min < 0:
        raise ConfigError("sigma_min must be >= 0", field="train.sigma_min")
    if not cfg.lr > 0:
        raise ConfigError("lr must be > 0", field="train.lr")


def evaluate_nmse(
    bundle: ModelBundle,
    ds: DatasetFile,
    idx: np.ndarray,
    k_steps: int,
    batch_size: int = 64,
) -> float:
    """Mean linear NMSE over `idx` in dB; samples with a zero channel are skipped."""
    extent = dataset_extent(ds.meta)
    a = ds.arrays
    errs = []
    for start in range(0, len(idx), batch_size):
        chunk = idx[start:start + batch_size]
        images, clouds, coords = encoder_inputs(a["images"][chunk], a["clouds"][chunk], a["coords"][chunk], extent)
        for i, h_hat in zip(chunk, infer_batch(bundle, images, clouds, coords, k_steps)):
            try:
                errs.append(nmse(ds.channel(int(i)), h_hat).linear)
            except UndefinedMetricError:
                continue
    if not errs:
        return float("nan")
    return 10.0 * math.log10(max(float(np.mean(errs)), 1e-300))


def train(
    ds: DatasetFile,
    cfg: TrainConfig,
    seed: int,
    *,
    progress: bool = True,
) -> TrainResult:
    _check(cfg)
    if len(ds) == 0:
        raise ContractError("training needs a non-empty dataset")
    train_idx, test_idx = split_by_user(ds, cfg.split_ratio, seed)
    if len(train_idx) < 2:
        raise ContractError("training split holds fewer than two samples")

    split_seq, model_seq, loop_seq = np.random.SeedSequence(seed).spawn(3)
    rng = np.random.default_rng(loop_seq)
    eval_rng = np.random.default_rng(split_seq)
    eval_idx = np.sort(eval_rng.permutation(test_idx)[: cfg.eval_subset]) if len(test_idx) else test_idx

    scaler = fit_channel_scale(ds.channels(train_idx))
    bundle = ModelBundle.create(
        cfg.encoder, cfg.unet, ds.n_ue, ds.n_bs,
        seed=int(model_seq.generate_state(1)[0]), tau0=cfg.tau0, scaler=scaler,
    )
    bundle.meta = {"dataset_hash": ds.content_hash(), "seed": int(seed), "normalization": cfg.unet.normalization}

    a = ds.arrays
    images, clouds, coords = encoder_inputs(
        a["images"][train_idx], a["clouds"][train_idx], a["coords"][train_idx], dataset_extent(ds.meta)
    )
    x1_all = scaler.to_tensors(ds.channels(train_idx))

    params = bundle.parameters()
    states = init_adam(params)
    batch = min(cfg.batch_size, len(train_idx))
    steps = len(train_idx) // batch
    if cfg.steps_per_epoch is not None:
        steps = min(steps, int(cfg.steps_per_epoch))
    logger.info("training on %d samples (%d test), %d steps/epoch, batch %d, scale %.4g",
                len(train_idx), len(test_idx), steps, batch, scaler.scale)

    history: List[Dict[str, object]] = []
    for epoch in tqdm(range(1, cfg.epochs + 1), desc="epochs", disable=not progress):
        perm = rng.permutation(len(train_idx))
        sums = {"cfm_loss": 0.0, "contrastive_loss": 0.0, "kl_loss": 0.0, "total": 0.0}
        for step in range(steps):
            b = perm[step * batch:(step + 1) * batch]
            latent = bundle.encoder.encode(images[b], clouds[b], coords[b])
            eps = standard_normal_like(latent, rng)
            x0 = sample_latent(latent, eps)
            t = rng.uniform(0.0, 1.0, size=len(b))
            noise = rng.standard_normal(x0.shape).astype(x0.dtype) if cfg.sigma_min > 0 else None
            parts = total_loss(
                x0, x1_all[b], t, bundle.unet.velocity, latent, bundle.temperature,
                lam=cfg.lam, sigma_min=cfg.sigma_min, eps=noise, use_alignment=cfg.use_alignment,
            )
            values = parts.as_floats()
            if not all(math.isfinite(v) for v in values.values()):
                raise TrainingDivergedError(epoch, step, values)
            zero_grad(params)
            backward(parts.total)
            adam_update(params, states, cfg.lr)
            for k, v in values.items():
                sums[k] += v

        row: Dict[str, object] = {"epoch": epoch}
        row.update({k: v / max(1, steps) for k, v in sums.items()})
        row["tau"] = bundle.temperature.value
        due = cfg.eval_every > 0 and epoch % cfg.eval_every == 0
        if len(eval_idx) and (due or epoch == cfg.epochs):
            row["test_nmse_db"] = evaluate_nmse(bundle, ds, eval_idx, cfg.eval_k)
        else:
            row["test_nmse_db"] = None
        history.append(row)
        logger.debug("epoch %d: %s", epoch, row)
        if row["test_nmse_db"] is not None:
            logger.info("epoch %d: total %.4f, test NMSE %.2f dB", epoch, row["total"], row["test_nmse_db"])

    return TrainResult(bundle=bundle, history=history, train_idx=train_idx, test_idx=test_idx)


def smoothed(values: List[float], window: int = 50) -> np.ndarray:
    """Trailing moving average (shorter window at the start)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.cumsum(np.insert(v, 0, 0.0))
    out = np.empty_like(v)
    for i in range(len(v)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out
