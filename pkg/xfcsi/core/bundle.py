"""Trained model bundle: encoder + velocity U-Net + temperature + channel scale."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .encoder import EncoderConfig, MultimodalEncoder
from .errors import CheckpointError, XfcsiError
from .flow import Temperature
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .normalize import ChannelScaler
from .velocity import UNetConfig, VelocityUNet

logger = logging.getLogger(__name__)

ENCODER_FILE = "encoder.ckpt"
VELOCITY_FILE = "velocity.ckpt"
TAU_NAME = "align/tau_raw"


@dataclass
class ModelBundle:
    encoder: MultimodalEncoder
    unet: VelocityUNet
    temperature: Temperature
    scaler: ChannelScaler
    meta: dict = field(default_factory=dict)

    @staticmethod
    def create(
        enc_cfg: EncoderConfig,
        unet_cfg: UNetConfig,
        n_ue: int,
        n_bs: int,
        seed: int,
        tau0: float,
        scaler: Optional[ChannelScaler] = None,
    ) -> "ModelBundle":
        enc_seq, unet_seq = np.random.SeedSequence(seed).spawn(2)
        return ModelBundle(
            encoder=MultimodalEncoder(enc_cfg, n_ue, n_bs, np.random.default_rng(enc_seq)),
            unet=VelocityUNet(unet_cfg, n_ue, n_bs, np.random.default_rng(unet_seq)),
            temperature=Temperature(tau0),
            scaler=scaler or ChannelScaler(1.0),
        )

    @property
    def n_ue(self) -> int:
        return self.encoder.n_ue

    @property
    def n_bs(self) -> int:
        return self.encoder.n_bs

    def parameters(self) -> list:
        return list(self.encoder.params) + list(self.unet.params) + [self.temperature.raw]

    def _meta(self) -> dict:
        return {
            **self.meta,
            "n_ue": self.n_ue,
            "n_bs": self.n_bs,
            "encoder": asdict(self.encoder.cfg),
            "unet": asdict(self.unet.cfg),
            "scale": self.scaler.scale,
        }

    def save(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = self._meta()
        enc_arrays = self.encoder.params.state_dict()
        enc_arrays[TAU_NAME] = self.temperature.raw.data.copy()
        enc_path, vel_path = out / ENCODER_FILE, out / VELOCITY_FILE
        save_checkpoint(enc_path, enc_arrays, {**meta, "part": "encoder"})
        save_checkpoint(vel_path, self.unet.params.state_dict(), {**meta, "part": "velocity"})
        logger.info("checkpoints written to %s", out)
        return enc_path, vel_path

    @staticmethod
    def load(
        encoder_path: str | Path,
        velocity_path: str | Path,
        n_ue: Optional[int] = None,
        n_bs: Optional[int] = None,
    ) -> "ModelBundle":
        enc_meta, enc_arrays = load_checkpoint(encoder_path)
        vel_meta, vel_arrays = load_checkpoint(velocity_path)
        for key in ("n_ue", "n_bs", "scale", "encoder", "unet"):
            if enc_meta.get(key) != vel_meta.get(key):
                raise CheckpointError(f"encoder and velocity checkpoints disagree on {key!r}")
        if n_ue is not None and enc_meta.get("n_ue") != n_ue:
            raise CheckpointError(f"checkpoint was trained for N_UE={enc_meta.get('n_ue')}, config has {n_ue}")
        if n_bs is not None and enc_meta.get("n_bs") != n_bs:
            raise CheckpointError(f"checkpoint was trained for N_BS={enc_meta.get('n_bs')}, config has {n_bs}")
        try:
            enc_cfg = EncoderConfig(**enc_meta["encoder"])
            unet_cfg = UNetConfig(**vel_meta["unet"])
            bundle = ModelBundle.create(
                enc_cfg, unet_cfg, int(enc_meta["n_ue"]), int(enc_meta["n_bs"]),
                seed=0, tau0=1.0, scaler=ChannelScaler(float(enc_meta["scale"])),
            )
            tau_raw = enc_arrays.pop(TAU_NAME)
            bundle.encoder.params.load_state_dict(enc_arrays)
            bundle.unet.params.load_state_dict(vel_arrays)
        except (KeyError, TypeError) as e:
            raise CheckpointError(f"checkpoint metadata incomplete: {e}") from e
        except XfcsiError as e:
            raise CheckpointError(f"checkpoint does not match its config: {e}") from e
        bundle.temperature.raw.data = np.asarray(tau_raw, dtype=bundle.temperature.raw.data.dtype).reshape(())
        bundle.temperature.raw.grad = np.zeros_like(bundle.temperature.raw.data)
        bundle.meta = {k: v for k, v in enc_meta.items() if k not in ("part",)}
        return bundle
