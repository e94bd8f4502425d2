import numpy as np
import pytest

from core.errors import ConfigError, ContractError, ShapeError
from core.nn import ParameterSet, Tensor, backward, no_grad
from core.nn.gradcheck import gradcheck, input_gradcheck, noise_floor
from core.nn.layers import (
    attention_fuse,
    conv1d,
    conv2d,
    conv2d_apply,
    fc,
    global_maxpool,
    init_attention,
    sinusoidal_embed,
    upsample_nearest2x,
)
from core.nn.tensor import (
    Parameter,
    concat,
    exp,
    getitem,
    log,
    logsumexp,
    matmul,
    reduce_max,
    reduce_mean,
    reduce_sum,
    softmax,
    sqrt,
    stack,
    transpose,
)

TOL = 1e-4


@pytest.mark.parametrize(
    "name, fn, shape",
    [
        ("add_broadcast", lambda x: reduce_sum((x + Tensor(np.arange(3.0))) * x), (2, 3)),
        ("mul", lambda x: reduce_sum(x * x * x), (3, 2)),
        ("div", lambda x: reduce_sum(Tensor(np.ones((2, 2))) / (x * x + 1.0)), (2, 2)),
        ("exp", lambda x: reduce_sum(exp(x)), (4,)),
        ("log", lambda x: reduce_sum(log(x * x + 0.5)), (4,)),
        ("sqrt", lambda x: reduce_sum(sqrt(x * x + 1.0)), (4,)),
        ("pow", lambda x: reduce_sum((x * x + 1.0) ** 1.5), (3,)),
        ("matmul", lambda x: reduce_sum(matmul(x, transpose(x, (1, 0)))), (3, 4)),
        ("mean", lambda x: reduce_mean(x * x, axis=1).sum(), (2, 5)),
        ("max", lambda x: reduce_sum(reduce_max(x, axis=-1) * 2.0), (3, 6)),
        ("getitem", lambda x: reduce_sum(getitem(x, (slice(None), 1)) * 3.0), (3, 4)),
        ("concat", lambda x: reduce_sum(concat([x, x * x], axis=0) ** 2), (2, 3)),
        ("stack", lambda x: reduce_sum(stack([x, exp(x)], axis=1) ** 2), (2, 3)),
        ("reshape", lambda x: reduce_sum(x.reshape(6) * Tensor(np.arange(6.0))), (2, 3)),
    ],
)
def test_tensor_op_gradients(name, fn, shape, rng):
    assert input_gradcheck(fn, rng.standard_normal(shape)) < TOL, name


def test_softmax_and_logsumexp_gradients(rng):
    w = rng.standard_normal((2, 5))
    assert input_gradcheck(lambda x: reduce_sum(softmax(x, axis=-1) * Tensor(w)), rng.standard_normal((2, 5))) < TOL
    assert input_gradcheck(lambda x: reduce_sum(logsumexp(x, axis=-1)), rng.standard_normal((3, 4))) < TOL


def test_softmax_is_stable_for_large_inputs():
    s = softmax(Tensor(np.array([1000.0, 1000.0])), axis=-1)
    assert np.allclose(s.data, [0.5, 0.5])
    assert logsumexp(Tensor(np.array([1000.0, 1000.0])), axis=-1).item() == pytest.approx(1000.0 + np.log(2.0))


def test_gradients_accumulate_over_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    backward(reduce_sum(x * x + x))
    assert x.grad[0] == pytest.approx(5.0)


def test_backward_needs_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        backward(x * 2.0)


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_fc_gradcheck(rng):
    ps = ParameterSet("t")
    ps.fc("fc", rng, 5, 3)
    x = Tensor(rng.standard_normal((4, 5)))
    res = gradcheck(lambda: reduce_sum(fc(ps, "fc", x) ** 2), list(ps), rng)
    assert res.max_rel_err < TOL, res.worst


def test_gradcheck_tolerates_roundoff_of_a_large_loss(rng):
    small = Parameter(rng.standard_normal(6), name="small", dtype=np.float64)
    weights = Tensor(3e-8 * rng.standard_normal(6))
    offset = Tensor(np.full(4, 5.0))
    res = gradcheck(lambda: reduce_sum(offset) + reduce_sum(small * weights), [small], rng)
    assert res.floor == pytest.approx(noise_floor(20.0 + float(np.sum(small.data * weights.data)), 1e-6))
    assert res.floor > 1e-3
    assert res.max_rel_err < TOL, res.worst


def test_gradcheck_still_flags_a_wrong_gradient(rng):
    p = Parameter(rng.standard_normal(5) + 3.0, name="p", dtype=np.float64)
    # the second factor is detached, so the analytic gradient is half the true one
    res = gradcheck(lambda: reduce_sum(p * Tensor(p.data.copy())), [p], rng)
    assert res.max_rel_err > 0.4
    assert res.worst.startswith("p[")


def test_fc_unbatched_matches_batched(rng):
    ps = ParameterSet("t")
    ps.fc("fc", rng, 5, 3)
    x = rng.standard_normal(5)
    single = fc(ps, "fc", Tensor(x), act=False).data
    batch = fc(ps, "fc", Tensor(x[None]), act=False).data[0]
    assert np.allclose(single, batch, atol=1e-6)


def test_fc_shape_error(rng):
    ps = ParameterSet("t")
    ps.fc("fc", rng, 5, 3)
    with pytest.raises(ShapeError):
        fc(ps, "fc", Tensor(np.ones((2, 4))))


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_gradcheck(stride, rng):
    ps = ParameterSet("t")
    ps.conv2d("conv", rng, 2, 3)
    x = Tensor(rng.standard_normal((2, 2, 6, 6)))
    res = gradcheck(lambda: reduce_sum(conv2d(ps, "conv", x, stride=stride) ** 2), list(ps), rng)
    assert res.max_rel_err < TOL, res.worst


@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_input_gradcheck(stride, rng):
    w = Tensor(rng.standard_normal((3, 2, 3, 3)))
    b = Tensor(np.zeros(3))
    err = input_gradcheck(lambda x: reduce_sum(conv2d_apply(x, w, b, stride=stride) ** 2), rng.standard_normal((1, 2, 4, 4)))
    assert err < TOL


def test_conv2d_output_shape(rng):
    ps = ParameterSet("t")
    ps.conv2d("conv", rng, 3, 4)
    assert conv2d(ps, "conv", Tensor(np.zeros((2, 3, 8, 8))), stride=2).shape == (2, 4, 4, 4)
    assert conv2d(ps, "conv", Tensor(np.zeros((3, 8, 8)))).shape == (4, 8, 8)
    with pytest.raises(ShapeError):
        conv2d(ps, "conv", Tensor(np.zeros((1, 2, 8, 8))))


def test_conv1d_and_maxpool_gradcheck(rng):
    ps = ParameterSet("t")
    ps.conv1d("pt", rng, 3, 4)
    x = Tensor(rng.standard_normal((2, 3, 7)))
    res = gradcheck(lambda: reduce_sum(global_maxpool(conv1d(ps, "pt", x)) ** 2), list(ps), rng)
    assert res.max_rel_err < TOL, res.worst


def test_maxpool_rejects_empty():
    with pytest.raises(ShapeError):
        global_maxpool(Tensor(np.zeros((1, 3, 0))))


def test_upsample_gradcheck(rng):
    err = input_gradcheck(lambda x: reduce_sum(upsample_nearest2x(x) ** 2 * 0.5), rng.standard_normal((1, 2, 3, 3)))
    assert err < TOL
    up = upsample_nearest2x(Tensor(np.arange(4.0).reshape(1, 1, 2, 2)))
    assert up.shape == (1, 1, 4, 4)
    assert up.data[0, 0, 1, 1] == 0.0 and up.data[0, 0, 3, 3] == 3.0


def test_attention_gradcheck(rng):
    ps = ParameterSet("t")
    init_attention(ps, "att", rng, 4)
    tokens = Tensor(rng.standard_normal((2, 3, 4)))
    res = gradcheck(lambda: reduce_sum(attention_fuse(ps, "att", tokens, heads=2) ** 2), list(ps), rng)
    assert res.max_rel_err < TOL, res.worst


def test_attention_weights_are_distributions(rng):
    ps = ParameterSet("t")
    init_attention(ps, "att", rng, 4)
    captured = []
    out = attention_fuse(ps, "att", Tensor(rng.standard_normal((2, 3, 4))), heads=2, weights_out=captured)
    assert out.shape == (2, 12)
    assert captured[0].shape == (2, 2, 3, 3)
    assert np.allclose(captured[0].sum(axis=-1), 1.0, atol=1e-6)


def test_attention_head_divisibility(rng):
    ps = ParameterSet("t")
    init_attention(ps, "att", rng, 6)
    with pytest.raises(ConfigError):
        attention_fuse(ps, "att", Tensor(np.zeros((1, 3, 6))), heads=4)


def test_sinusoidal_embedding():
    e = sinusoidal_embed(0.0, 8).data
    assert np.allclose(e[0::2], 0.0) and np.allclose(e[1::2], 1.0)
    batch = sinusoidal_embed(np.array([0.0, 1.0, 2.0]), 8)
    assert batch.shape == (3, 8)
    assert batch.data[1, 0] == pytest.approx(np.sin(1.0), abs=1e-6)
    with pytest.raises(ConfigError):
        sinusoidal_embed(0.0, 7)


def test_parameter_set_state_round_trip(rng):
    ps = ParameterSet("enc")
    ps.fc("a", rng, 2, 3)
    assert ps.names() == ["enc/a/W", "enc/a/b"]
    other = ParameterSet("enc")
    other.fc("a", np.random.default_rng(99), 2, 3)
    other.load_state_dict(ps.state_dict())
    assert np.array_equal(other["a/W"].data, ps["a/W"].data)
    with pytest.raises(ConfigError):
        ps.fc("a", rng, 2, 3)
    with pytest.raises(ShapeError):
        other.load_state_dict({"enc/a/W": np.zeros((2, 2)), "enc/a/b": np.zeros(3)})
