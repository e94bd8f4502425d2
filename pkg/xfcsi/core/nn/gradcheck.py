"""Central-difference gradient checks, run in a float64 shadow by default."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np

from .tensor import Parameter, Tensor, backward

# central differences of a loss L carry about eps * |L| / h of round-off; gradients
# below this many multiples of that noise are compared in absolute terms
NOISE_ULPS = 1e6


@dataclass
class GradCheckResult:
    max_rel_err: float
    checked: int
    worst: str
    floor: float = 0.0


def _rel_err(a: float, n: float, floor: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), floor)


def noise_floor(loss: float, h: float, dtype: np.dtype = np.float64, floor: float = 1e-6) -> float:
    return max(floor, NOISE_ULPS * float(np.finfo(dtype).eps) * abs(loss) / h)


def gradcheck(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    rng: np.random.Generator,
    *,
    points: int = 10,
    h: float = 1e-6,
    dtype: np.dtype = np.float64,
    floor: float = 1e-6,
) -> GradCheckResult:
    """
    Compare reverse-mode gradients of `loss_fn()` against central differences
    at `points` randomly chosen entries of each parameter. Parameters are cast
    to `dtype` for the check and restored afterwards. The relative-error
    denominator never drops below `noise_floor(loss, h)`.
    """
    saved = [(p.data.copy(), p.data.dtype) for p in params]
    for p in params:
        p.cast(dtype)
    try:
        loss = loss_fn()
        backward(loss)
        analytic = [p.grad.copy() for p in params]
        tiny = noise_floor(loss.item(), h, dtype, floor)

        worst, worst_name, checked = 0.0, "", 0
        for p, g in zip(params, analytic):
            flat = p.data.reshape(-1)
            n_pick = min(points, flat.size)
            for idx in rng.choice(flat.size, size=n_pick, replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                up = loss_fn().item()
                flat[idx] = orig - h
                down = loss_fn().item()
                flat[idx] = orig
                numeric = (up - down) / (2.0 * h)
                err = _rel_err(float(g.reshape(-1)[idx]), numeric, tiny)
                checked += 1
                if err > worst:
                    worst, worst_name = err, f"{p.name}[{idx}]"
        return GradCheckResult(max_rel_err=worst, checked=checked, worst=worst_name, floor=tiny)
    finally:
        for p, (data, dt) in zip(params, saved):
            p.data = data.astype(dt)
            p.grad = np.zeros_like(p.data)


def input_gradcheck(
    fn: Callable[[Tensor], Tensor],
    x: np.ndarray,
    *,
    h: float = 1e-6,
    floor: float = 1e-6,
) -> float:
    """Full central-difference check of d fn(x) / dx for a small float64 input."""
    x = np.array(x, dtype=np.float64)
    t = Tensor(x, requires_grad=True)
    out = fn(t)
    backward(out)
    analytic = t.grad.reshape(-1)
    tiny = noise_floor(out.item(), h, np.float64, floor)
    flat = x.reshape(-1)
    errs: List[float] = []
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(Tensor(x)).item()
        flat[i] = orig - h
        down = fn(Tensor(x)).item()
        flat[i] = orig
        errs.append(_rel_err(float(analytic[i]), (up - down) / (2.0 * h), tiny))
    return max(errs) if errs else 0.0
