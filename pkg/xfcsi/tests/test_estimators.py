import math

import numpy as np
import pytest

from core.channel import ChannelMatrix, dft_matrix, nmse
from core.errors import ConfigError, ContractError, DomainError
from core.estimators import EstimateContext, get_estimator, list_estimators
from core.estimators.flow import FlowEstimator
from core.estimators.knn import (
    KnnDatabase,
    circular_mean,
    knn_build,
    knn_infer,
    knn_neighbors,
    knn_weights,
    strongest_paths,
    summarize_location,
)
from core.estimators.lasso import (
    angular_sensing_matrix,
    ista,
    lambda_max,
    lasso_estimate,
    power_iteration,
    select_lambda,
    soft_threshold,
)
from core.estimators.ls import LsEstimator, ls_estimate, ls_solve
from core.model import PathParam
from core.pilots import PilotConfig, PilotObservation, simulate_pilots
from core.propagation import synth_channel


def _h(rng, n_ue=4, n_bs=16):
    return ChannelMatrix.spatial(rng.standard_normal((n_ue, n_bs)) + 1j * rng.standard_normal((n_ue, n_bs)))


def _sparse_h(n_ue=4, n_bs=16):
    w = dft_matrix(n_ue)[:, 1]
    f = dft_matrix(n_bs)[:, 5]
    return ChannelMatrix.spatial(2.0 * np.outer(w, f.conj()))


NOISELESS = PilotConfig(snr_db=float("inf"))


# --- least squares -------------------------------------------------------------

def test_ls_recovers_noiseless_channel(rng):
    h = _h(rng)
    est = ls_estimate(simulate_pilots(h, NOISELESS, rng))
    assert nmse(h, est).db < -80.0


def test_ls_of_zero_observation_is_zero(rng):
    obs = simulate_pilots(_h(rng), NOISELESS, rng)
    obs.y = np.zeros_like(obs.y)
    assert np.all(ls_estimate(obs).entries == 0)


def test_ls_matches_normal_equations(rng):
    obs = simulate_pilots(_h(rng), PilotConfig(snr_db=5.0), rng)
    x, regularized = ls_solve(obs)
    AH = obs.A.conj().T
    expected = np.linalg.solve(AH @ obs.A, AH @ obs.y)
    assert not regularized
    assert np.allclose(x, expected, atol=1e-10)


def test_ls_underdetermined_is_consistent(rng):
    obs = simulate_pilots(_h(rng), NOISELESS, rng, n_pilots=10)
    x, regularized = ls_solve(obs)
    assert not regularized
    assert np.allclose(obs.A @ x, obs.y, atol=1e-10)


def test_ls_rank_deficient_is_regularized():
    A = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], dtype=complex)
    obs = PilotObservation(y=np.array([2.0, 4.0, 6.0], dtype=complex), A=A, n_ue=1, n_bs=2)
    res = LsEstimator().estimate(EstimateContext(sample=None, obs=obs))
    assert res.flags == ["ls_regularized"]
    assert np.allclose(A @ res.h.entries.reshape(-1, order="F"), obs.y, atol=1e-4)


# --- LASSO -------------------------------------------------------------------

def test_soft_threshold():
    out = soft_threshold(np.array([3 + 4j, 0.5j, 0.0]), 1.0)
    assert out[0] == pytest.approx(2.4 + 3.2j)
    assert out[1] == 0 and out[2] == 0


def test_power_iteration_matches_svd(rng):
    A = rng.standard_normal((20, 8)) + 1j * rng.standard_normal((20, 8))
    assert power_iteration(A) == pytest.approx(np.linalg.svd(A, compute_uv=False)[0], rel=1e-6)
    assert power_iteration(np.zeros((3, 3))) == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_ista_objective_never_increases(seed):
    rng = np.random.default_rng(seed)
    obs = simulate_pilots(_h(rng), PilotConfig(snr_db=10.0), rng)
    A = angular_sensing_matrix(obs)
    _, iters, _, trace = ista(A, obs.y, 0.1 * lambda_max(obs), max_iter=500, tol=0.0)
    assert len(trace) == iters + 1
    assert np.all(np.diff(trace) <= 1e-9 * trace[0])


@pytest.mark.parametrize("seed", range(5))
def test_ista_solution_satisfies_optimality(seed):
    rng = np.random.default_rng(seed)
    obs = simulate_pilots(_h(rng), PilotConfig(snr_db=10.0), rng)
    A = angular_sensing_matrix(obs)
    lam = 0.2 * lambda_max(obs)
    x, _, _, _ = ista(A, obs.y, lam, max_iter=20000, tol=1e-13)
    corr = 2.0 * (A.conj().T @ (obs.y - A @ x))
    support = np.abs(x) > 0
    assert support.any()
    on = corr[support] - lam * x[support] / np.abs(x[support])
    assert np.max(np.abs(on)) <= 1e-2 * lam
    assert np.all(np.abs(corr[~support]) <= lam * (1 + 1e-2))


def test_lambda_zero_reaches_least_squares(rng):
    h = _h(rng)
    res = lasso_estimate(simulate_pilots(h, NOISELESS, rng), 0.0, max_iter=2000, tol=1e-10)
    assert res.converged
    assert nmse(h, res.h).db < -60.0


def test_lambda_above_max_gives_zero(rng):
    obs = simulate_pilots(_h(rng), PilotConfig(snr_db=10.0), rng)
    res = lasso_estimate(obs, 1.001 * lambda_max(obs))
    assert np.all(res.h.entries == 0)
    assert res.converged


def test_lasso_recovers_sparse_channel(rng):
    h = _sparse_h()
    obs = simulate_pilots(h, NOISELESS, rng)
    res = lasso_estimate(obs, 1e-3 * lambda_max(obs))
    assert nmse(h, res.h).db < -20.0
    assert np.argmax(np.abs(res.h_ad.entries)) == np.ravel_multi_index((1, 5), (4, 16))


def test_ista_rejects_negative_lambda(rng):
    obs = simulate_pilots(_h(rng), NOISELESS, rng)
    with pytest.raises(DomainError):
        ista(angular_sensing_matrix(obs), obs.y, -1.0)


def test_select_lambda_scores_the_grid(rng):
    truths = [_sparse_h() for _ in range(2)]
    obs = [simulate_pilots(h, PilotConfig(snr_db=20.0), rng) for h in truths]
    best, scores = select_lambda(obs, truths, grid=(1e-2, 1.0), max_iter=100)
    assert set(scores) == {1e-2, 1.0}
    assert best == 1e-2
    assert scores[1.0] == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DomainError):
        select_lambda([], [])


# --- KNN ---------------------------------------------------------------------

def test_circular_mean():
    assert circular_mean(np.radians([179.0, -179.0])) == pytest.approx(math.pi)
    assert circular_mean(np.array([0.1, 0.3])) == pytest.approx(0.2)
    assert circular_mean(np.array([0.0, math.pi / 2]), np.array([3.0, 1.0])) == pytest.approx(math.atan2(1, 3))


def _path(gain, aod=0.1, aoa=-0.2, length=10.0):
    return PathParam(gain=gain, aod=aod, aoa=aoa, length=length)


def test_strongest_paths_pads():
    top = strongest_paths([_path(0.1), _path(-0.5), _path(0.3j), _path(0.05)])
    assert [abs(p.gain) for p in top] == pytest.approx([0.5, 0.3, 0.1])
    padded = strongest_paths([_path(1.0)])
    assert len(padded) == 3 and padded[1].gain == 0 and padded[2].gain == 0


def test_summarize_averages_only_real_slots():
    frames = [[_path(1.0, aod=0.2)], [_path(3.0, aod=0.4), _path(1.0, aod=-1.0, length=20.0)]]
    s = summarize_location(frames)
    assert s[0].gain == pytest.approx(2.0)
    assert s[0].aod == pytest.approx(0.3)
    assert s[1].gain == pytest.approx(1.0)
    assert s[1].length == pytest.approx(20.0)
    assert s[2].gain == 0


def _db():
    gains = np.array([[1.0, 0.5, 0.0], [2.0, 0.0, 0.0]], dtype=complex)
    return KnnDatabase(
        locations=np.array([[-1.0, 0.0], [1.0, 0.0]]),
        gains=gains,
        aods=np.array([[0.2, -0.4, 0.0], [0.4, 0.0, 0.0]]),
        aoas=np.array([[1.0, 0.5, 0.0], [1.2, 0.0, 0.0]]),
        lengths=np.array([[10.0, 12.0, 0.0], [20.0, 0.0, 0.0]]),
        n_ue=4,
        n_bs=16,
    )


def test_knn_single_neighbor_is_exact():
    db = _db()
    h = knn_infer(db, (-1.0, 0.0), k=1)
    assert np.allclose(h.entries, synth_channel(db.paths(0), 16, 4).entries)


def test_knn_equidistant_neighbors_weigh_equally():
    idx, w = knn_neighbors(_db(), (0.0, 0.0), k=2)
    assert sorted(idx.tolist()) == [0, 1]
    assert w == pytest.approx([0.5, 0.5])
    assert knn_weights(np.array([0.0, 1.0]))[0] > 0.999


@pytest.mark.parametrize("direction", [(1.0, 0.0), (0.0, 1.0), (0.6, -0.8)])
def test_knn_prediction_is_continuous_in_location(direction):
    db = _db()
    q = np.array([0.3, 0.1])
    base = knn_infer(db, q, k=2).entries
    moved = []
    for delta in (1e-4, 1e-6, 1e-8):
        h = knn_infer(db, q + delta * np.asarray(direction), k=2).entries
        moved.append(np.linalg.norm(h - base))
        assert moved[-1] <= 1e4 * delta
    assert moved[0] > moved[1] > moved[2]


def test_knn_k_is_clamped_and_validated(caplog):
    idx, w = knn_neighbors(_db(), (5.0, 0.0), k=10)
    assert len(idx) == 2
    assert "exceeds the database size" in caplog.text
    with pytest.raises(ConfigError):
        knn_neighbors(_db(), (0.0, 0.0), k=0)


def test_knn_build_from_dataset(tiny_dataset):
    idx = tiny_dataset.user_indices([0, 2, 3])
    db = knn_build(tiny_dataset, idx)
    assert len(db) == 3
    assert np.allclose(db.locations[1], tiny_dataset.arrays["positions"][tiny_dataset.index_of(2, 0)])
    with pytest.raises(ContractError):
        knn_build(tiny_dataset, [])


def test_knn_estimator_uses_gps_fix(tiny_dataset):
    db = knn_build(tiny_dataset, tiny_dataset.user_indices(range(6)))
    est = get_estimator("knn", db=db, knn_k=1)
    sample = tiny_dataset.sample(0)
    res = est.estimate(EstimateContext(sample=sample))
    expected = knn_infer(db, sample.coord, 1)
    assert np.array_equal(res.h.entries, expected.entries)


# --- flow + registry ---------------------------------------------------------

def test_flow_estimator_batches(tiny_bundle, tiny_dataset):
    est = FlowEstimator(bundle=tiny_bundle, k=3, batch_size=2)
    contexts = [EstimateContext(sample=tiny_dataset.sample(i)) for i in range(5)]
    results = est.estimate_many(contexts)
    assert len(results) == 5
    assert all(r.velocity_calls == 3 and r.encoder_calls == 1 for r in results)
    single = est.estimate(contexts[3])
    assert np.allclose(single.h.entries, results[3].h.entries, atol=1e-4)


def test_registry():
    assert set(list_estimators()) == {"flow", "ls", "lasso", "knn"}
    assert get_estimator("ls").needs_pilots
    lasso = get_estimator("lasso", lasso_rel_lambda=0.1, knn_k=3, bundle=None)
    assert lasso.rel_lambda == 0.1
    with pytest.raises(KeyError):
        get_estimator("omp")
    with pytest.raises(ContractError):
        get_estimator("knn")
    with pytest.raises(ContractError):
        get_estimator("flow")
