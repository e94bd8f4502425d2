"""
Layer set for the encoder and the velocity U-Net.

All layers take a leading batch axis. Parameters live in a `ParameterSet`
under slash-separated names ("cnn/conv1/W"); the prefix of the set
("encoder", "velocity") is what ends up in checkpoints.
"""
from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeError
from .tensor import (
    DEFAULT_DTYPE,
    Parameter,
    Tensor,
    as_tensor,
    leaky_relu,
    matmul,
    reduce_max,
    reshape,
    softmax,
    transpose,
)

LEAK = 0.01


class ParameterSet:
    """Ordered name -> Parameter mapping with fan-in scaled initializers."""

    def __init__(self, prefix: str):
        self.prefix = prefix
        self._params: Dict[str, Parameter] = {}

    def _full(self, name: str) -> str:
        return f"{self.prefix}/{name}" if self.prefix else name

    def add(self, name: str, value: np.ndarray) -> Parameter:
        full = self._full(name)
        if full in self._params:
            raise ConfigError(f"duplicate parameter name: {full}")
        p = Parameter(value, name=full)
        self._params[full] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[self._full(name)]

    def __contains__(self, name: str) -> bool:
        return self._full(name) in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    # --- initializers -------------------------------------------------
    def fc(self, name: str, rng: np.random.Generator, n_in: int, n_out: int) -> None:
        bound = 1.0 / math.sqrt(n_in)
        self.add(f"{name}/W", rng.uniform(-bound, bound, size=(n_out, n_in)))
        self.add(f"{name}/b", np.zeros(n_out))

    def conv2d(self, name: str, rng: np.random.Generator, c_in: int, c_out: int, k: int = 3) -> None:
        bound = 1.0 / math.sqrt(c_in * k * k)
        self.add(f"{name}/W", rng.uniform(-bound, bound, size=(c_out, c_in, k, k)))
        self.add(f"{name}/b", np.zeros(c_out))

    def conv1d(self, name: str, rng: np.random.Generator, c_in: int, c_out: int) -> None:
        bound = 1.0 / math.sqrt(c_in)
        self.add(f"{name}/W", rng.uniform(-bound, bound, size=(c_out, c_in)))
        self.add(f"{name}/b", np.zeros(c_out))

    # --- state --------------------------------------------------------
    def state_dict(self) -> Dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state_dict(self, arrays: Dict[str, np.ndarray]) -> None:
        missing = [k for k in self._params if k not in arrays]
        if missing:
            raise ShapeError(f"missing parameters: {', '.join(missing[:5])}")
        for k, p in self._params.items():
            a = np.asarray(arrays[k])
            if a.shape != p.data.shape:
                raise ShapeError(f"{k}: expected shape {p.data.shape}, got {a.shape}")
            p.data = a.astype(p.data.dtype, copy=True)
            p.grad = np.zeros_like(p.data)

    def cast(self, dtype: np.dtype) -> None:
        for p in self._params.values():
            p.cast(dtype)


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

def fc_apply(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """y = W x + b over the last axis of x."""
    x = as_tensor(x)
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"fc input has {x.shape[-1]} features, weight expects {W.shape[1]}")
    if x.ndim == 1:
        return reshape(matmul(reshape(x, (1, -1)), transpose(W, (1, 0))), (W.shape[0],)) + b
    return matmul(x, transpose(W, (1, 0))) + b


def fc(ps: ParameterSet, name: str, x: Tensor, act: bool = True) -> Tensor:
    y = fc_apply(x, ps[f"{name}/W"], ps[f"{name}/b"])
    return leaky_relu(y, LEAK) if act else y


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int) -> Tuple[np.ndarray, np.ndarray]:
    k = w.shape[-1]
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.einsum("bchwij,ocij->bohw", win, w, optimize=True), win


def conv2d_apply(x: Tensor, W: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """
    Zero-padded "same" cross-correlation, x [B, C_in, H, W] -> [B, C_out, H/s, W/s].
    A 3-D input is treated as a single sample.
    """
    if stride not in (1, 2):
        raise ConfigError(f"conv2d stride must be 1 or 2, got {stride}")
    x = as_tensor(x)
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [B, C, H, W], got {x.shape}")
    c_out, c_in, kh, kw = W.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigError(f"conv2d kernel must be square and odd, got {kh}x{kw}")
    if x.shape[1] != c_in:
        raise ShapeError(f"conv2d input has {x.shape[1]} channels, kernel expects {c_in}")

    out, win = _conv2d_forward(x.data, W.data, stride)
    pad = kh // 2
    in_shape = x.shape

    def backward(g: np.ndarray):
        gw = np.einsum("bohw,bchwij->ocij", g, win, optimize=True)
        gwin = np.einsum("bohw,ocij->bchwij", g, W.data, optimize=True)
        n, c, h, wd = in_shape
        gpad = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=g.dtype)
        ho, wo = g.shape[2], g.shape[3]
        for i in range(kh):
            for j in range(kw):
                gpad[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gwin[..., i, j]
        gx = gpad[:, :, pad:pad + h, pad:pad + wd]
        return gx, gw

    y = Tensor.from_op(out, (x, W), backward)
    y = y + reshape(b, (1, c_out, 1, 1))
    return reshape(y, y.shape[1:]) if squeeze else y


def conv2d(ps: ParameterSet, name: str, x: Tensor, stride: int = 1, act: bool = True) -> Tensor:
    y = conv2d_apply(x, ps[f"{name}/W"], ps[f"{name}/b"], stride=stride)
    return leaky_relu(y, LEAK) if act else y


def conv1d_apply(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Kernel-size-1 conv: the same linear map applied to every point, [B, C_in, U] -> [B, C_out, U]."""
    x = as_tensor(x)
    if W.ndim == 3:
        if W.shape[2] != 1:
            raise ShapeError(f"conv1d kernel size must be 1, got {W.shape[2]}")
        W = reshape(W, W.shape[:2])
    if x.ndim not in (2, 3) or x.shape[-2] != W.shape[1]:
        raise ShapeError(f"conv1d input {x.shape} does not match kernel {W.shape}")
    return matmul(W, x) + reshape(b, (W.shape[0], 1))


def conv1d(ps: ParameterSet, name: str, x: Tensor, act: bool = True) -> Tensor:
    y = conv1d_apply(x, ps[f"{name}/W"], ps[f"{name}/b"])
    return leaky_relu(y, LEAK) if act else y


def global_maxpool(x: Tensor) -> Tensor:
    """Max over the point axis (last); ties route the gradient to the first index."""
    if x.shape[-1] == 0:
        raise ShapeError("global max-pool over zero points")
    return reduce_max(x, axis=-1)


def upsample_nearest2x(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g: np.ndarray):
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return Tensor.from_op(out, (x,), backward)


# ---------------------------------------------------------------------------
# embeddings / attention
# ---------------------------------------------------------------------------

def sinusoidal_embed(s, dim: int, dtype: np.dtype = DEFAULT_DTYPE) -> Tensor:
    """
    out[2i] = sin(s / 10000^(2i/D)), out[2i+1] = cos(s / 10000^(2i/D)).
    A scalar gives [D]; an array of shape [B] gives [B, D].
    """
    if dim <= 0 or dim % 2:
        raise ConfigError(f"sinusoidal embedding dim must be positive and even, got {dim}")
    s = np.asarray(s, dtype=np.float64)
    freqs = 10000.0 ** (-np.arange(0, dim, 2, dtype=np.float64) / dim)
    arg = s[..., None] * freqs
    out = np.empty(s.shape + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(arg)
    out[..., 1::2] = np.cos(arg)
    return Tensor(out, dtype=dtype)


def init_attention(ps: ParameterSet, name: str, rng: np.random.Generator, dim: int) -> None:
    for proj in ("q", "k", "v", "o"):
        ps.fc(f"{name}/{proj}", rng, dim, dim)


def attention_fuse(
    ps: ParameterSet,
    name: str,
    tokens: Tensor,
    heads: int,
    weights_out: Optional[list] = None,
) -> Tensor:
    """
    One multi-head self-attention block over M modality tokens [B, M, d]
    with a residual add; returns the concatenated tokens [B, M*d].
    """
    bsz, m, d = tokens.shape
    if heads < 1 or d % heads:
        raise ConfigError(f"feature dim {d} is not divisible by {heads} heads")
    dh = d // heads

    def split(t: Tensor) -> Tensor:
        return transpose(reshape(t, (bsz, m, heads, dh)), (0, 2, 1, 3))

    q = split(fc(ps, f"{name}/q", tokens, act=False))
    k = split(fc(ps, f"{name}/k", tokens, act=False))
    v = split(fc(ps, f"{name}/v", tokens, act=False))
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    attn = softmax(scores, axis=-1)
    if weights_out is not None:
        weights_out.append(attn.data)
    mixed = reshape(transpose(matmul(attn, v), (0, 2, 1, 3)), (bsz, m, d))
    out = fc(ps, f"{name}/o", mixed, act=False) + tokens
    return reshape(out, (bsz, m * d))

