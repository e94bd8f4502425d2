import numpy as np
import pytest

from core.bundle import ModelBundle
from core.channel import ChannelMatrix
from core.encoder import SIGMA_LOG_BIAS, EncoderConfig, MultimodalEncoder, map_mode, sample_latent, standard_normal_like
from core.errors import CheckpointError, ConfigError, DomainError, ShapeError
from core.nn import Parameter, adam_update, init_adam, zero_grad
from core.nn.checkpoint import CKPT_MAGIC, load_checkpoint, read_container, save_checkpoint, write_container
from core.nn.gradcheck import gradcheck
from core.nn.tensor import reduce_sum
from core.normalize import ChannelScaler, encoder_inputs, fit_channel_scale, normalize_cloud
from core.velocity import UNetConfig, VelocityUNet

N_UE, N_BS = 2, 4


def _inputs(rng, batch=2):
    return (
        rng.uniform(size=(batch, 3, 8, 8)),
        rng.uniform(-1, 1, size=(batch, 3, 16)),
        rng.uniform(-50, 50, size=(batch, 2)),
    )


# --- encoder ---------------------------------------------------------------

def test_encoder_output_shapes(tiny_enc_cfg, rng):
    enc = MultimodalEncoder(tiny_enc_cfg, N_UE, N_BS, rng)
    g = enc.encode(*_inputs(rng, 3))
    assert g.mu.shape == (3, 2, N_UE, N_BS)
    assert g.sigma_log.shape == (3, 2, N_UE, N_BS)
    image, cloud, coord = _inputs(rng, 1)
    single = enc.encode(image[0], cloud[0], coord[0])
    assert single.mu.shape == (2, N_UE, N_BS)


def test_encoder_sigma_log_bias_and_attention(tiny_enc_cfg, rng):
    enc = MultimodalEncoder(tiny_enc_cfg, N_UE, N_BS, rng)
    assert np.all(enc.params["head/sigma_log/b"].data == SIGMA_LOG_BIAS)
    weights = []
    enc.encode(*_inputs(rng, 2), attn_weights=weights)
    assert weights[0].shape == (2, tiny_enc_cfg.heads, 3, 3)


def test_encoder_is_permutation_invariant_over_points(tiny_enc_cfg, rng):
    enc = MultimodalEncoder(tiny_enc_cfg, N_UE, N_BS, rng)
    image, cloud, coord = _inputs(rng, 1)
    shuffled = cloud[:, :, rng.permutation(cloud.shape[2])]
    a = enc.encode(image, cloud, coord).mu.data
    b = enc.encode(image, shuffled, coord).mu.data
    assert np.allclose(a, b, atol=1e-6)


@pytest.mark.parametrize(
    "override",
    [
        {"image_size": 12},
        {"heads": 3},
        {"coord_embed_dim": 6},
        {"point_widths": (4, 8)},
    ],
)
def test_encoder_config_errors(tiny_enc_cfg, override, rng):
    cfg = EncoderConfig(**{**tiny_enc_cfg.__dict__, **override})
    with pytest.raises(ConfigError):
        MultimodalEncoder(cfg, N_UE, N_BS, rng)


def test_encoder_shape_errors(tiny_enc_cfg, rng):
    enc = MultimodalEncoder(tiny_enc_cfg, N_UE, N_BS, rng)
    image, cloud, coord = _inputs(rng, 2)
    with pytest.raises(ShapeError):
        enc.encode(image[:, :, :4], cloud, coord)
    with pytest.raises(ShapeError):
        enc.encode(image, cloud[:1], coord)


def test_encoder_gradcheck(tiny_enc_cfg, rng):
    enc = MultimodalEncoder(tiny_enc_cfg, N_UE, N_BS, rng)
    inputs = _inputs(rng, 2)

    def loss():
        g = enc.encode(*inputs)
        return reduce_sum(g.mu * g.mu) + reduce_sum(g.sigma_log * 0.3)

    res = gradcheck(loss, list(enc.params), rng, points=3)
    assert res.max_rel_err < 1e-4, res.worst


def test_reparameterized_sample(tiny_enc_cfg, rng):
    enc = MultimodalEncoder(tiny_enc_cfg, N_UE, N_BS, rng)
    g = enc.encode(*_inputs(rng, 2))
    eps = standard_normal_like(g, rng)
    x0 = sample_latent(g, eps).data
    assert np.allclose(x0, g.mu.data + g.sigma * eps, atol=1e-6)
    assert np.array_equal(sample_latent(g, np.zeros_like(eps)).data, map_mode(g).data)
    with pytest.raises(ShapeError):
        sample_latent(g, eps[:1])


# --- velocity U-Net ----------------------------------------------------------

def test_unet_shapes_and_time_domain(tiny_unet_cfg, rng):
    net = VelocityUNet(tiny_unet_cfg, N_UE, N_BS, rng)
    x = rng.standard_normal((3, 2, N_UE, N_BS))
    assert net.velocity(x, np.array([0.0, 0.5, 1.0])).shape == x.shape
    assert net.velocity(x[0], 0.25).shape == x.shape[1:]
    with pytest.raises(DomainError):
        net.velocity(x, 1.5)
    with pytest.raises(ShapeError):
        net.velocity(rng.standard_normal((1, 2, 4, 4)), 0.5)


def test_unet_depends_on_time(tiny_unet_cfg, rng):
    net = VelocityUNet(tiny_unet_cfg, N_UE, N_BS, rng)
    x = rng.standard_normal((2, N_UE, N_BS))
    assert not np.allclose(net.velocity(x, 0.1).data, net.velocity(x, 0.9).data)


def test_unet_config_errors(rng):
    with pytest.raises(ConfigError):
        VelocityUNet(UNetConfig(depth=2, base_channels=4, time_dim=8), N_UE, N_BS, rng)
    with pytest.raises(ConfigError):
        VelocityUNet(UNetConfig(depth=0), N_UE, N_BS, rng)
    with pytest.raises(ConfigError):
        VelocityUNet(UNetConfig(depth=1, normalization="group"), N_UE, N_BS, rng)


def test_unet_gradcheck(tiny_unet_cfg, rng):
    net = VelocityUNet(tiny_unet_cfg, N_UE, N_BS, rng)
    x = rng.standard_normal((2, 2, N_UE, N_BS))
    t = np.array([0.3, 0.8])
    res = gradcheck(lambda: reduce_sum(net.velocity(x, t) ** 2), list(net.params), rng, points=3)
    assert res.max_rel_err < 1e-4, res.worst


# --- bundle / checkpoints ----------------------------------------------------

def test_bundle_round_trip(tiny_bundle, tmp_path, rng):
    tiny_bundle.meta = {"dataset_hash": "abc", "seed": 3}
    tiny_bundle.temperature.raw.data = np.asarray(np.log(0.2), dtype=np.float32)
    enc_path, vel_path = tiny_bundle.save(tmp_path / "run")
    loaded = ModelBundle.load(enc_path, vel_path, n_ue=N_UE, n_bs=N_BS)
    inputs = _inputs(rng, 2)
    assert np.array_equal(loaded.encoder.encode(*inputs).mu.data, tiny_bundle.encoder.encode(*inputs).mu.data)
    x = rng.standard_normal((2, N_UE, N_BS))
    assert np.array_equal(loaded.unet.velocity(x, 0.4).data, tiny_bundle.unet.velocity(x, 0.4).data)
    assert loaded.temperature.value == pytest.approx(0.2, rel=1e-6)
    assert loaded.meta["dataset_hash"] == "abc"


def test_bundle_rejects_other_array_sizes(tiny_bundle, tmp_path):
    paths = tiny_bundle.save(tmp_path)
    with pytest.raises(CheckpointError):
        ModelBundle.load(*paths, n_ue=4, n_bs=N_BS)


def test_container_round_trip(tmp_path):
    arrays = {
        "a": np.arange(6, dtype=np.float32).reshape(2, 3),
        "b": np.array([1 + 2j, -3j], dtype=np.complex64),
        "c": np.array([True, False]),
    }
    save_checkpoint(tmp_path / "x.ckpt", arrays, {"note": "hi"})
    meta, back = load_checkpoint(tmp_path / "x.ckpt")
    assert meta == {"note": "hi"}
    for k, v in arrays.items():
        assert back[k].dtype == v.dtype
        assert np.array_equal(back[k], v)


def test_container_rejects_bad_files(tmp_path):
    write_container(tmp_path / "d.bin", "XFCSI-DATA-1", {}, {"a": np.zeros(2)})
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "d.bin")
    raw = (tmp_path / "d.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-4])
    with pytest.raises(CheckpointError):
        read_container(tmp_path / "t.bin", "XFCSI-DATA-1")
    (tmp_path / "m.bin").write_bytes((CKPT_MAGIC + "\n").encode())
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "m.bin")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


# --- optimizer ---------------------------------------------------------------

def test_first_adam_step_is_lr_times_sign():
    p = Parameter(np.array([1.0, -2.0, 0.5]), name="p", dtype=np.float64)
    p.grad = np.array([0.3, -4.0, 1e-2])
    states = init_adam([p])
    adam_update([p], states, lr=1e-3)
    assert np.allclose(p.data, [1.0 - 1e-3, -2.0 + 1e-3, 0.5 - 1e-3], atol=1e-8)
    assert states["p"].step_count == 1
    zero_grad([p])
    assert np.all(p.grad == 0)


def test_adam_rejects_bad_lr_and_state():
    p = Parameter(np.zeros(2), name="p")
    states = init_adam([p])
    with pytest.raises(ConfigError):
        adam_update([p], states, lr=0.0)
    states["p"].m = np.zeros(3)
    with pytest.raises(ShapeError):
        adam_update([p], states, lr=1e-3)


def test_adam_minimizes_quadratic():
    p = Parameter(np.array([3.0, -2.0]), name="p", dtype=np.float64)
    states = init_adam([p])
    for _ in range(2000):
        p.grad = 2.0 * p.data
        adam_update([p], states, lr=1e-2)
    assert np.max(np.abs(p.data)) < 5e-2


# --- normalization -----------------------------------------------------------

def test_channel_scale_gives_unit_element_power(rng):
    chans = [ChannelMatrix.spatial(5.0 * (rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))))
             for _ in range(50)]
    scaler = fit_channel_scale(chans)
    stacked = scaler.to_tensors(chans, dtype=np.float64)
    assert np.mean(stacked ** 2) == pytest.approx(1.0, rel=1e-9)
    back = scaler.from_tensor(stacked[0])
    assert np.allclose(back.entries, chans[0].entries, atol=1e-10)
    assert fit_channel_scale([]).scale == 1.0
    assert ChannelScaler(1.0).scale == 1.0


def test_encoder_inputs_scale_clouds_only():
    images = np.ones((1, 3, 8, 8))
    clouds = np.full((1, 3, 4), 25.0)
    coords = np.array([[10.0, -20.0]])
    im, cl, co = encoder_inputs(images, clouds, coords, 50.0)
    assert cl.dtype == np.float32 and np.allclose(cl, 0.5)
    assert np.allclose(co, coords) and np.allclose(im, images)
    with pytest.raises(ShapeError):
        encoder_inputs(images, clouds[0], coords, 50.0)
    with pytest.raises(ShapeError):
        encoder_inputs(images, clouds, coords, 0.0)


def test_normalize_cloud():
    cloud = np.array([[50.0, -25.0], [0.0, 10.0], [5.0, 0.0]])
    out = normalize_cloud(cloud, 50.0)
    assert out.dtype == np.float32
    assert np.allclose(out, cloud / 50.0)
    with pytest.raises(ShapeError):
        normalize_cloud(np.zeros((2, 5)), 50.0)
