"""
LASSO in the angular domain solved with ISTA:

    min_x ||y - A_ad x||^2 + lambda1 ||x||_1,   A_ad = A (conj(F_BS) kron F_UE)

Step 1/L with L = 2 sigma_max(A_ad)^2 from power iteration. The best iterate
(lowest objective) is returned; hitting max_iter sets `converged=False`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..channel import ChannelMatrix, dft_matrix, nmse, to_spatial
from ..errors import DomainError, UndefinedMetricError
from ..pilots import PilotObservation, unvec
from .base import ChannelEstimator, EstimateContext, EstimateResult

logger = logging.getLogger(__name__)

LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0)


@dataclass
class LassoResult:
    h: ChannelMatrix
    h_ad: ChannelMatrix
    iterations: int
    converged: bool
    objective: List[float] = field(default_factory=list)


def angular_sensing_matrix(obs: PilotObservation) -> np.ndarray:
    return obs.A @ np.kron(dft_matrix(obs.n_bs).conj(), dft_matrix(obs.n_ue))


def power_iteration(A: np.ndarray, iters: int = 500, tol: float = 1e-12) -> float:
    """Largest singular value of A (deterministic start vector)."""
    v = np.ones(A.shape[1], dtype=np.complex128) / np.sqrt(A.shape[1])
    sigma2 = 0.0
    for _ in range(iters):
        u = A.conj().T @ (A @ v)
        nrm = float(np.linalg.norm(u))
        if nrm == 0.0:
            return 0.0
        v = u / nrm
        if abs(nrm - sigma2) <= tol * nrm:
            sigma2 = nrm
            break
        sigma2 = nrm
    return float(np.sqrt(sigma2))


def soft_threshold(x: np.ndarray, thr: float) -> np.ndarray:
    """Complex soft threshold: shrink the magnitude by thr, keep the phase."""
    mag = np.abs(x)
    scale = np.where(mag > thr, 1.0 - thr / np.where(mag > 0, mag, 1.0), 0.0)
    return x * scale


def lambda_max(obs: PilotObservation) -> float:
    """Smallest lambda1 whose LASSO solution is identically zero."""
    return float(2.0 * np.max(np.abs(angular_sensing_matrix(obs).conj().T @ obs.y)))


def ista(
    A: np.ndarray,
    y: np.ndarray,
    lambda1: float,
    max_iter: int = 500,
    tol: float = 1e-6,
):
    if lambda1 < 0:
        raise DomainError(f"lambda1 must be >= 0, got {lambda1}")
    sigma = power_iteration(A)
    x = np.zeros(A.shape[1], dtype=np.complex128)
    if sigma == 0.0:
        return x, 0, True, [float(np.sum(np.abs(y) ** 2))]
    # small margin keeps the step at or below 1/L despite power-iteration round-off
    L = 2.0 * sigma ** 2 * (1.0 + 1e-9)
    AH = A.conj().T

    def objective(v: np.ndarray) -> float:
        r = y - A @ v
        return float(np.real(np.vdot(r, r)) + lambda1 * np.sum(np.abs(v)))

    trace = [objective(x)]
    best, best_obj = x, trace[0]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = 2.0 * (AH @ (A @ x - y))
        x_new = soft_threshold(x - grad / L, lambda1 / L)
        obj = objective(x_new)
        trace.append(obj)
        if obj < best_obj:
            best, best_obj = x_new, obj
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step <= tol * max(1.0, float(np.linalg.norm(x))):
            converged = True
            break
    return best, it, converged, trace


def lasso_estimate(obs: PilotObservation, lambda1: float, max_iter: int = 500, tol: float = 1e-6) -> LassoResult:
    x, iters, converged, trace = ista(angular_sensing_matrix(obs), obs.y, lambda1, max_iter, tol)
    if not converged:
        logger.debug("ISTA stopped after %d iterations without converging", iters)
    h_ad = ChannelMatrix.angular(unvec(x, obs.n_ue, obs.n_bs))
    return LassoResult(h=to_spatial(h_ad), h_ad=h_ad, iterations=iters, converged=converged, objective=trace)


@dataclass
class LassoEstimator:
    """`rel_lambda` scales lambda_max of each observation."""
    rel_lambda: float = 1e-2
    max_iter: int = 500
    tol: float = 1e-6
    method_id: str = "lasso"
    display_name: str = "LASSO (ISTA)"
    needs_pilots: bool = True

    def estimate(self, ctx: EstimateContext) -> EstimateResult:
        lam = self.rel_lambda * lambda_max(ctx.obs)
        res = lasso_estimate(ctx.obs, lam, self.max_iter, self.tol)
        return EstimateResult(h=res.h, flags=[] if res.converged else ["ista_not_converged"])

    def estimate_many(self, contexts: Sequence[EstimateContext]) -> List[EstimateResult]:
        return [self.estimate(c) for c in contexts]


def make_estimator(lasso_rel_lambda: float = 1e-2, max_iter: int = 500, tol: float = 1e-6, **_: object) -> ChannelEstimator:
    return LassoEstimator(rel_lambda=lasso_rel_lambda, max_iter=max_iter, tol=tol)


def select_lambda(
    observations: Sequence[PilotObservation],
    truths: Sequence[ChannelMatrix],
    grid: Sequence[float] = LAMBDA_GRID,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> tuple[float, dict]:
    """
    Pick the relative lambda1 with the lowest mean linear NMSE on held-out
    samples. Returns (best, {rel_lambda: mean NMSE in dB}).
    """
    if not observations or len(observations) != len(truths):
        raise DomainError("lambda selection needs matching, non-empty observation and truth lists")
    scores = {}
    for rel in grid:
        errs = []
        for obs, h in zip(observations, truths):
            est = lasso_estimate(obs, rel * lambda_max(obs), max_iter, tol).h
            try:
                errs.append(nmse(h, est).linear)
            except UndefinedMetricError:
                continue
        scores[float(rel)] = float(10.0 * np.log10(np.mean(errs))) if errs else float("inf")
    best = min(scores, key=lambda r: (scores[r], r))
    logger.info("LASSO lambda1 grid %s -> %g", {k: round(v, 2) for k, v in scores.items()}, best)
    return best, scores
