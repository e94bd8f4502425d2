from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..channel import ChannelMatrix
from ..pilots import PilotObservation, unvec
from .base import ChannelEstimator, EstimateContext, EstimateResult

logger = logging.getLogger(__name__)

RIDGE = 1e-6


def ls_solve(obs: PilotObservation) -> Tuple[np.ndarray, bool]:
    """
    vec(H) = pinv(A) y (minimum-norm when underdetermined). A numerically
    rank-deficient A falls back to a ridge-regularized solve; returns
    (vec, regularized).
    """
    A, y = obs.A, obs.y
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[1], dtype=np.complex128), True
    tol = s[0] * max(A.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    if rank < min(A.shape):
        logger.warning("pilot matrix is rank deficient (%d < %d); using a regularized pseudo-inverse",
                       rank, min(A.shape))
        delta = RIDGE * s[0] ** 2
        AH = A.conj().T
        x = np.linalg.solve(AH @ A + delta * np.eye(A.shape[1]), AH @ y)
        return x, True
    return np.linalg.pinv(A) @ y, False


def ls_estimate(obs: PilotObservation) -> ChannelMatrix:
    x, _ = ls_solve(obs)
    return ChannelMatrix.spatial(unvec(x, obs.n_ue, obs.n_bs))


@dataclass
class LsEstimator:
    method_id: str = "ls"
    display_name: str = "Least squares"
    needs_pilots: bool = True

    def estimate(self, ctx: EstimateContext) -> EstimateResult:
        x, regularized = ls_solve(ctx.obs)
        h = ChannelMatrix.spatial(unvec(x, ctx.obs.n_ue, ctx.obs.n_bs))
        return EstimateResult(h=h, flags=["ls_regularized"] if regularized else [])

    def estimate_many(self, contexts: Sequence[EstimateContext]) -> List[EstimateResult]:
        return [self.estimate(c) for c in contexts]


def make_estimator(**_: object) -> ChannelEstimator:
    return LsEstimator()
