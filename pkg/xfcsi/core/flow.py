"""
Flow-matching objective: linear interpolation path, conditional velocity
target, CFM regression loss and the modality-alignment terms (contrastive
InfoNCE over cosine similarity + KL to a standard normal).

Batched everywhere: states are [S, 2, N_UE, N_BS], t is [S].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .encoder import LatentGaussian
from .errors import ContractError, DomainError, ShapeError
from .nn.tensor import (
    Parameter,
    Tensor,
    as_tensor,
    exp,
    getitem,
    logsumexp,
    matmul,
    reshape,
    sqrt,
    transpose,
)

ArrayOrTensor = Union[np.ndarray, Tensor]
VelocityFn = Callable[[Tensor, np.ndarray], Tensor]

TAU0 = 0.07


class Temperature:
    """Contrastive temperature tau = exp(raw); positive by construction."""

    def __init__(self, tau0: float = TAU0, dtype=np.float32):
        if not tau0 > 0:
            raise DomainError(f"initial temperature must be > 0, got {tau0}")
        self.raw = Parameter(np.array(math.log(tau0)), name="align/tau_raw", dtype=dtype)

    @property
    def value(self) -> float:
        return float(np.exp(self.raw.data))

    def tensor(self) -> Tensor:
        return exp(self.raw)


@dataclass
class LossParts:
    cfm: Tensor
    contrastive: Tensor
    kl: Tensor
    total: Tensor

    def as_floats(self) -> dict:
        return {
            "cfm_loss": self.cfm.item(),
            "contrastive_loss": self.contrastive.item(),
            "kl_loss": self.kl.item(),
            "total": self.total.item(),
        }


def _same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def _time_column(t, batch: int, ndim: int) -> np.ndarray:
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (batch,))
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise DomainError("time index must lie in [0, 1]")
    return t.reshape((batch,) + (1,) * (ndim - 1))


def interpolate(
    x0: ArrayOrTensor,
    x1: ArrayOrTensor,
    t,
    sigma_min: float = 0.0,
    eps: Optional[ArrayOrTensor] = None,
) -> Tensor:
    """x_t = t x1 + (1 - t) x0 + sigma_min eps. A scalar t applies to the whole batch."""
    x0 = as_tensor(x0)
    x1 = as_tensor(x1, dtype=x0.dtype)
    _same_shape(x0, x1)
    batched = np.ndim(t) > 0
    if batched:
        tt = _time_column(t, x0.shape[0], x0.ndim)
    else:
        tt = float(_time_column(t, 1, 1)[0])
    xt = x1 * tt + x0 * (1.0 - tt)
    if sigma_min > 0.0:
        if eps is None:
            raise ContractError("sigma_min > 0 needs an eps tensor")
        eps = as_tensor(eps, dtype=x0.dtype)
        _same_shape(x0, eps)
        xt = xt + eps * sigma_min
    return xt


def conditional_velocity(x0: ArrayOrTensor, x1: ArrayOrTensor) -> Tensor:
    x0 = as_tensor(x0)
    x1 = as_tensor(x1, dtype=x0.dtype)
    _same_shape(x0, x1)
    return x1 - x0


def _per_sample_sq(x: Tensor) -> Tensor:
    return reshape(x * x, (x.shape[0], -1)).sum(axis=1)


def cfm_loss(
    x0: ArrayOrTensor,
    x1: ArrayOrTensor,
    t,
    v_theta: VelocityFn,
    sigma_min: float = 0.0,
    eps: Optional[ArrayOrTensor] = None,
) -> Tensor:
    """(1/S) sum_s || v(x_t, t_s) - (x1_s - x0_s) ||_F^2."""
    x0 = as_tensor(x0)
    x1 = as_tensor(x1, dtype=x0.dtype)
    if x0.ndim == 0 or x0.shape[0] == 0:
        raise ContractError("cfm_loss needs at least one sample")
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x0.shape[0],))
    xt = interpolate(x0, x1, t, sigma_min, eps)
    resid = v_theta(xt, t) - conditional_velocity(x0, x1)
    return _per_sample_sq(resid).mean()


def _unit_rows(x: Tensor) -> Tensor:
    flat = reshape(x, (x.shape[0], -1))
    norm = sqrt((flat * flat).sum(axis=1, keepdims=True) + 1e-24)
    return flat / norm


def contrastive_loss(
    x0: ArrayOrTensor,
    x1: ArrayOrTensor,
    tau: Union[Temperature, Tensor, float],
    allow_single: bool = False,
) -> Tensor:
    """
    InfoNCE over cosine similarity of flattened tensors: row s scores x0_s
    against every x1_k, the positive is k = s.
    """
    x0 = as_tensor(x0)
    x1 = as_tensor(x1, dtype=x0.dtype)
    _same_shape(x0, x1)
    s = x0.shape[0]
    if s < 2 and not allow_single:
        raise ContractError("contrastive loss needs at least two samples (no negatives otherwise)")
    sim = matmul(_unit_rows(x0), transpose(_unit_rows(x1), (1, 0)))
    if isinstance(tau, Temperature):
        tau = tau.tensor()
    logits = sim / tau if isinstance(tau, Tensor) else sim * (1.0 / float(tau))
    idx = np.arange(s)
    positives = getitem(logits, (idx, idx))
    return (logsumexp(logits, axis=1) - positives).mean()


def kl_loss(latent: LatentGaussian) -> Tensor:
    """-(1/S) sum_s sum_elements (1 + log sigma^2 - mu^2 - sigma^2); twice the textbook KL."""
    mu, sl = latent.mu, latent.sigma_log
    s = mu.shape[0]
    inner = 1.0 + sl - mu * mu - exp(sl)
    return inner.sum() * (-1.0 / s)


def alignment_loss(
    x0: ArrayOrTensor,
    x1: ArrayOrTensor,
    tau: Union[Temperature, Tensor, float],
    lam: float,
    latent: LatentGaussian,
) -> Tensor:
    if lam < 0:
        raise DomainError(f"alignment weight must be >= 0, got {lam}")
    return contrastive_loss(x0, x1, tau) + kl_loss(latent) * lam


def total_loss(
    x0: Tensor,
    x1: ArrayOrTensor,
    t,
    v_theta: VelocityFn,
    latent: LatentGaussian,
    tau: Temperature,
    *,
    lam: float,
    sigma_min: float = 0.0,
    eps: Optional[ArrayOrTensor] = None,
    use_alignment: bool = True,
) -> LossParts:
    """CFM + contrastive + lam * KL; with use_alignment off only CFM is optimized."""
    cfm = cfm_loss(x0, x1, t, v_theta, sigma_min, eps)
    contr = contrastive_loss(x0, x1, tau)
    kl = kl_loss(latent)
    if use_alignment:
        total = cfm + contr + kl * lam
    else:
        total = cfm
    return LossParts(cfm=cfm, contrastive=contr, kl=kl, total=total)
