import math

import numpy as np
import pytest

from core.channel import ChannelMatrix, nmse
from core.errors import ConfigError, ContractError
from core.infer import ab2_step, euler_init, infer_batch, infer_channel, integrate, trace_metrics
from core.nn import Tensor


def _linear(x, t):
    return x


def _terminal_error(k, integrator):
    x0 = np.array([1.0, -0.5])
    return float(np.max(np.abs(integrate(x0, _linear, k, integrator).terminal - x0 * math.e)))


@pytest.mark.parametrize("integrator", ["ab2", "euler"])
@pytest.mark.parametrize("k", [1, 2, 7])
def test_constant_field_is_exact(integrator, k):
    c = np.array([[0.3, -1.2], [2.0, 0.0]])
    trace = integrate(np.zeros((2, 2)), lambda x, t: c, k, integrator)
    assert np.allclose(trace.terminal, c, atol=1e-12)
    assert len(trace.states) == k + 1
    assert trace.velocity_calls == k


def test_single_step_is_euler():
    x0 = np.array([1.0, 2.0])
    ab2 = integrate(x0, _linear, 1, "ab2").terminal
    assert np.allclose(ab2, 2.0 * x0)
    assert np.allclose(ab2, euler_init(x0, _linear, 1.0))


def test_ab2_is_second_order():
    ratio = _terminal_error(16, "ab2") / _terminal_error(32, "ab2")
    assert 3.2 <= ratio <= 4.8


def test_euler_is_first_order():
    ratio = _terminal_error(16, "euler") / _terminal_error(32, "euler")
    assert 1.7 <= ratio <= 2.3


def test_ab2_beats_euler():
    assert _terminal_error(8, "ab2") < _terminal_error(8, "euler")


def test_ab2_step_contract():
    with pytest.raises(ContractError):
        ab2_step(np.zeros(2), None, _linear, 1, 0.1)
    with pytest.raises(ContractError):
        ab2_step(np.zeros(2), np.zeros(2), _linear, 0, 0.1)
    out = ab2_step(np.ones(2), np.zeros(2), lambda x, t: np.ones(2), 1, 0.5)
    assert np.allclose(out, 1.75)


def test_integrate_rejects_bad_config():
    with pytest.raises(ConfigError):
        integrate(np.zeros(2), _linear, 0)
    with pytest.raises(ConfigError):
        integrate(np.zeros(2), _linear, 3, "rk4")


def test_time_arguments_stay_in_range():
    seen = []

    def field(x, t):
        seen.append(t)
        return np.zeros_like(x)

    integrate(np.zeros(3), field, 7)
    assert seen[0] == 0.0
    assert all(0.0 <= t < 1.0 for t in seen)
    assert seen == pytest.approx([k / 7 for k in range(7)])


def _inputs(rng, batch=None):
    lead = () if batch is None else (batch,)
    return (
        rng.uniform(size=lead + (3, 8, 8)),
        rng.uniform(-1, 1, size=lead + (3, 16)),
        rng.uniform(-50, 50, size=lead + (2,)),
    )


def test_infer_channel_shapes_and_counts(tiny_bundle, rng):
    res = infer_channel(tiny_bundle, *_inputs(rng), k_steps=5)
    assert res.h_hat.shape == (2, 4)
    assert res.encoder_calls == 1
    assert res.velocity_calls == 5
    assert np.all(np.isfinite(res.h_hat.entries))


class _ZeroField:
    def velocity(self, x, t):
        return Tensor(np.zeros(np.shape(x)))


def test_zero_field_returns_map_latent(tiny_bundle, rng):
    image, cloud, coord = _inputs(rng)
    latent = tiny_bundle.encoder.encode(image, cloud, coord)
    tiny_bundle.unet = _ZeroField()
    res = infer_channel(tiny_bundle, image, cloud, coord, k_steps=3)
    expected = tiny_bundle.scaler.from_tensor(latent.mu.data)
    assert np.allclose(res.h_hat.entries, expected.entries, atol=1e-5)


def test_batch_matches_single(tiny_bundle, rng):
    images, clouds, coords = _inputs(rng, batch=3)
    batch = infer_batch(tiny_bundle, images, clouds, coords, k_steps=3)
    assert len(batch) == 3
    single = infer_channel(tiny_bundle, images[1], clouds[1], coords[1], k_steps=3).h_hat
    assert np.allclose(batch[1].entries, single.entries, atol=1e-4)


def test_trace_metrics_rows(tiny_bundle, rng):
    res = infer_channel(tiny_bundle, *_inputs(rng), k_steps=4)
    h_true = ChannelMatrix.spatial(rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4)))
    rows = trace_metrics(res.trace, tiny_bundle.scaler, h_true)
    assert [r["step"] for r in rows] == [0, 1, 2, 3, 4]
    assert rows[-1]["t"] == pytest.approx(1.0)
    assert rows[-1]["nmse_db"] == pytest.approx(nmse(h_true, res.h_hat).db)
    assert all(0.0 <= r["top5_energy"] <= 1.0 + 1e-9 for r in rows)
