from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np
import pytest

APP_DIR = Path(__file__).resolve().parents[1]
if str(APP_DIR) not in sys.path:
    sys.path.insert(0, str(APP_DIR))

from core.bundle import ModelBundle  # noqa: E402
from core.dataset import generate_dataset  # noqa: E402
from core.encoder import EncoderConfig  # noqa: E402
from core.scene import SceneConfig  # noqa: E402
from core.velocity import UNetConfig  # noqa: E402

N_UE, N_BS = 2, 4


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs, enabled with XFCSI_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("XFCSI_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set XFCSI_SLOW=1 to run end-to-end oracles")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_channel(rng, n_ue=N_UE, n_bs=N_BS):
    return rng.standard_normal((n_ue, n_bs)) + 1j * rng.standard_normal((n_ue, n_bs))


@pytest.fixture
def tiny_enc_cfg():
    return EncoderConfig(image_size=8, cnn_base=4, point_widths=(4, 8, 8), coord_embed_dim=8, feature_dim=8, heads=2)


@pytest.fixture
def tiny_unet_cfg():
    return UNetConfig(depth=1, base_channels=4, time_dim=8)


@pytest.fixture
def tiny_scene_cfg():
    return SceneConfig(n_users=6, n_frames=3, image_size=8, n_points=16)


@pytest.fixture(scope="session")
def tiny_dataset():
    cfg = SceneConfig(n_users=6, n_frames=3, image_size=8, n_points=16)
    return generate_dataset(cfg, N_UE, N_BS, seed=7, progress=False, workers=1)


@pytest.fixture
def tiny_bundle(tiny_enc_cfg, tiny_unet_cfg):
    return ModelBundle.create(tiny_enc_cfg, tiny_unet_cfg, N_UE, N_BS, seed=3, tau0=0.07)
