import math

import numpy as np
import pytest

from core.channel import clamp_db
from core.dataset import split_by_user
from core.errors import ConfigError
from core.evaluation import EvalConfig, run_benchmark, se_scale, sweep_points
from core.infer import InferConfig
from core.pilots import PilotConfig


def _small(**kw):
    base = dict(snr_values=(0.0, 20.0), knn_k=2, lasso_val_samples=2, lasso_max_iter=50)
    base.update(kw)
    return EvalConfig(**base)


@pytest.fixture(scope="module")
def split(tiny_dataset):
    return split_by_user(tiny_dataset, 0.5, seed=0)


def _run(ds, split, cfg, bundle=None):
    train_idx, test_idx = split
    return run_benchmark(ds, train_idx, test_idx, cfg, PilotConfig(), InferConfig(k=2), bundle, seed=1, progress=False)


def test_snr_sweep_covers_every_method(tiny_dataset, split, tiny_bundle):
    report = _run(tiny_dataset, split, _small(), tiny_bundle)
    assert report.errors == []
    assert report.succeeded() == ["flow", "knn", "lasso", "ls"]
    assert len(report.rows) == 8
    # three test users, frames 2 and 3 of each
    assert len(report.samples) == 8 * 6
    assert all(r["frame_index"] >= 1 for r in report.samples)
    test_users = set(tiny_dataset.arrays["user_ids"][split[1]].tolist())
    assert {r["user_id"] for r in report.samples} == test_users
    assert set(report.lasso_lambda) == {"snr_db=0", "snr_db=20"}


def test_aggregate_is_recomputable(tiny_dataset, split, tiny_bundle):
    report = _run(tiny_dataset, split, _small(methods=("ls",)))
    for row in report.rows:
        samples = [s for s in report.samples if s["value"] == row["value"]]
        errs = [s["nmse_linear"] for s in samples if s["nmse_linear"] is not None]
        assert row["nmse_db"] == pytest.approx(clamp_db(10.0 * math.log10(np.mean(errs))))
        assert row["se"] == pytest.approx(np.mean([s["se"] for s in samples]))
        assert row["n_samples"] == len(samples)


def test_ls_improves_with_snr(tiny_dataset, split):
    report = _run(tiny_dataset, split, _small(methods=("ls",)))
    by_snr = {r["value"]: r["nmse_db"] for r in report.rows}
    assert by_snr[20.0] < by_snr[0.0]


def test_flow_without_checkpoints_is_skipped(tiny_dataset, split):
    report = _run(tiny_dataset, split, _small(methods=("flow", "ls")))
    assert report.succeeded() == ["ls"]
    assert [e["method"] for e in report.errors] == ["flow"]
    assert any(i.code == "method_skipped" for i in report.issues)


def test_k_sweep_runs_flow_only(tiny_dataset, split, tiny_bundle):
    report = _run(tiny_dataset, split, _small(sweep="k", k_values=(1, 3)), tiny_bundle)
    assert report.succeeded() == ["flow"]
    assert [r["velocity_calls"] for r in report.rows] == [1, 3]
    assert all(r["encoder_calls"] == 1 for r in report.rows)


def test_tca_sweep_points():
    points = sweep_points(EvalConfig(sweep="tca"), PilotConfig(), InferConfig())
    assert [p.k for p in points] == [2, 3, 5, 7]
    assert all(p.pilots.snr_db == 10.0 for p in points)
    assert points[0].pilots.t_ca == 0.00125
    with pytest.raises(ConfigError):
        sweep_points(EvalConfig(sweep="tca", tca_k=(2,)), PilotConfig(), InferConfig())
    with pytest.raises(ConfigError):
        sweep_points(EvalConfig(sweep="doppler"), PilotConfig(), InferConfig())


def test_unknown_method_is_rejected(tiny_dataset, split):
    with pytest.raises(ConfigError):
        _run(tiny_dataset, split, _small(methods=("omp",)))


def test_se_scale_gives_unit_power(tiny_dataset, split):
    train_idx = split[0]
    s = se_scale(tiny_dataset, train_idx)
    ch = tiny_dataset.arrays["channels"][train_idx].astype(np.complex128) * s
    assert np.mean(np.abs(ch) ** 2) == pytest.approx(1.0, rel=1e-6)
