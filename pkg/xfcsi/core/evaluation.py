"""
Benchmark harness: every method over a sweep (SNR, acquisition time T_ca or
the number of integration steps K), NMSE / cosine similarity / frame-level
spectral efficiency averaged over frames 2..N of each test user.

Pilot-based methods lose the acquisition window; sensing methods keep
transmitting on the previous frame's beams during it and pay the GPS query.
Sensing estimates do not depend on pilots, so they are computed once per K
and reused across sweep points.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .beams import FrameAccounting, beam_search, db_to_linear, instantaneous_se, pilot_based_se, sensing_aided_se
from .bundle import ModelBundle
from .channel import ChannelMatrix, clamp_db, cosine_similarity, nmse
from .datafile import DatasetFile
from .errors import ConfigError, ContractError, UndefinedMetricError, XfcsiError
from .estimators import EstimateContext, get_estimator
from .estimators.knn import knn_build
from .estimators.lasso import LAMBDA_GRID, select_lambda
from .infer import InferConfig
from .model import Issue, Severity
from .normalize import dataset_extent
from .pilots import PilotConfig, simulate_pilots

logger = logging.getLogger(__name__)

SWEEPS = ("snr", "tca", "k")
METHODS = ("flow", "ls", "lasso", "knn")


@dataclass
class EvalConfig:
    methods: Tuple[str, ...] = METHODS
    sweep: str = "snr"
    snr_values: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    tca_values: Tuple[float, ...] = (0.00125, 0.0015, 0.002, 0.0025)
    tca_k: Tuple[int, ...] = (2, 3, 5, 7)
    tca_snr_db: float = 10.0
    k_values: Tuple[int, ...] = (1, 2, 3, 5, 7)
    knn_k: int = 5
    lasso_grid: Tuple[float, ...] = LAMBDA_GRID
    lasso_val_samples: int = 16
    lasso_max_iter: int = 500
    lasso_tol: float = 1e-6
    bandwidth_hz: float = 120e3
    gps_bits: int = 128
    max_test_users: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("methods", "snr_values", "tca_values", "tca_k", "k_values", "lasso_grid"):
            setattr(self, name, tuple(getattr(self, name)))


@dataclass
class SweepPoint:
    variable: str
    value: float
    pilots: PilotConfig
    k: int


@dataclass
class Report:
    sweep: str
    rows: List[Dict[str, object]] = field(default_factory=list)
    samples: List[Dict[str, object]] = field(default_factory=list)
    errors: List[Dict[str, object]] = field(default_factory=list)
    issues: List[Issue] = field(default_factory=list)
    lasso_lambda: Dict[str, float] = field(default_factory=dict)
    config: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "sweep": self.sweep,
            "config": self.config,
            "rows": self.rows,
            "errors": self.errors,
            "issues": [i.to_dict() for i in self.issues],
            "lasso_lambda": self.lasso_lambda,
        }

    def succeeded(self) -> List[str]:
        return sorted({str(r["method"]) for r in self.rows})


def sweep_points(cfg: EvalConfig, pilots: PilotConfig, infer: InferConfig) -> List[SweepPoint]:
    if cfg.sweep == "snr":
        return [SweepPoint("snr_db", float(s), replace(pilots, snr_db=float(s)), infer.k) for s in cfg.snr_values]
    if cfg.sweep == "tca":
        if len(cfg.tca_values) != len(cfg.tca_k):
            raise ConfigError("tca_values and tca_k must have the same length", field="eval.tca_k")
        return [
            SweepPoint("t_ca", float(t), replace(pilots, t_ca=float(t), snr_db=cfg.tca_snr_db), int(k))
            for t, k in zip(cfg.tca_values, cfg.tca_k)
        ]
    if cfg.sweep == "k":
        return [SweepPoint("k", float(k), pilots, int(k)) for k in cfg.k_values]
    raise ConfigError(f"unknown sweep {cfg.sweep!r} (expected one of {', '.join(SWEEPS)})", field="eval.sweep")


def se_scale(ds: DatasetFile, train_idx: Sequence[int]) -> float:
    """Amplitude factor giving the training channels unit mean element power."""
    ch = ds.arrays["channels"][np.asarray(train_idx, dtype=np.int64)]
    power = float(np.mean(np.abs(ch.astype(np.complex128)) ** 2)) if len(ch) else 0.0
    return 1.0 / math.sqrt(power) if power > 0.0 else 1.0


def _test_users(ds: DatasetFile, test_idx: Sequence[int], limit: Optional[int]) -> List[int]:
    users = sorted({int(ds.arrays["user_ids"][i]) for i in test_idx})
    return users if limit is None else users[:limit]


def _metrics(h_true: ChannelMatrix, h_est: ChannelMatrix, flags: List[str]) -> Tuple[Optional[float], Optional[float]]:
    try:
        err = nmse(h_true, h_est).linear
    except UndefinedMetricError:
        flags.append("zero_ground_truth")
        return None, None
    try:
        cs = cosine_similarity(h_true, h_est)
    except UndefinedMetricError:
        flags.append("zero_estimate")
        cs = 0.0
    return err, cs


def _rate(h_beams: ChannelMatrix, h_true: ChannelMatrix, snr_linear: float, scale: float, flags: List[str]) -> float:
    pair = beam_search(h_beams)
    if pair.flagged:
        flags.append("broadside_beams")
    scaled = ChannelMatrix.spatial(h_true.entries * scale)
    return instantaneous_se(pair.w, pair.f, scaled, snr_linear)


class _Bench:
    def __init__(
        self,
        ds: DatasetFile,
        train_idx: np.ndarray,
        test_idx: np.ndarray,
        cfg: EvalConfig,
        pilots: PilotConfig,
        infer: InferConfig,
        bundle: Optional[ModelBundle],
        seed: int,
        progress: bool,
    ):
        self.ds = ds
        self.train_idx = np.asarray(train_idx, dtype=np.int64)
        self.cfg = cfg
        self.pilots = pilots
        self.infer = infer
        self.bundle = bundle
        self.seed = int(seed)
        self.progress = progress
        self.users = _test_users(ds, test_idx, cfg.max_test_users)
        self.frames = ds.n_frames
        self.scale = se_scale(ds, self.train_idx)
        self._sensing_cache: Dict[Tuple[str, int], Dict[int, object]] = {}
        self._knn_db = None

    def indices(self, first_frame: int) -> List[int]:
        return [self.ds.index_of(u, f) for u in self.users for f in range(first_frame, self.frames)]

    def sensing_estimates(self, method: str, k: int) -> Dict[int, object]:
        """Estimates for every frame of every test user, keyed by sample index."""
        key = (method, k if method == "flow" else 0)
        if key in self._sensing_cache:
            return self._sensing_cache[key]
        if method == "flow":
            if self.bundle is None:
                raise ContractError("no trained checkpoints were given")
            est = get_estimator(
                "flow", bundle=self.bundle, flow_k=k,
                integrator=self.infer.integrator, extent=dataset_extent(self.ds.meta),
            )
        else:
            if self._knn_db is None:
                self._knn_db = knn_build(self.ds, self.train_idx)
            est = get_estimator("knn", db=self._knn_db, knn_k=self.cfg.knn_k)
        idx = self.indices(0)
        results = est.estimate_many([EstimateContext(sample=self.ds.sample(i)) for i in idx])
        out = dict(zip(idx, results))
        self._sensing_cache[key] = out
        return out

    def pilot_rng(self, point: int, i: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, point, int(i)])

    def lasso_lambda(self, point_no: int, point: SweepPoint) -> float:
        n = min(self.cfg.lasso_val_samples, len(self.train_idx))
        if n == 0:
            return self.cfg.lasso_grid[0]
        pick = np.sort(np.random.default_rng([self.seed, point_no, 7]).choice(self.train_idx, size=n, replace=False))
        truths, observations = [], []
        for i in pick:
            h = self.ds.channel(int(i))
            if h.frobenius() == 0.0:
                continue
            truths.append(h)
            observations.append(simulate_pilots(h, point.pilots, np.random.default_rng([self.seed, point_no, int(i), 1])))
        if not observations:
            return self.cfg.lasso_grid[0]
        best, _ = select_lambda(observations, truths, self.cfg.lasso_grid, self.cfg.lasso_max_iter, self.cfg.lasso_tol)
        return best

    def run_method(self, method: str, point_no: int, point: SweepPoint, report: Report) -> List[Dict[str, object]]:
        acct = FrameAccounting(
            t_f=point.pilots.t_f, t_ca=point.pilots.t_ca,
            bandwidth_hz=self.cfg.bandwidth_hz, gps_bits=self.cfg.gps_bits,
        )
        snr_linear = db_to_linear(point.pilots.snr_db)
        rows: List[Dict[str, object]] = []

        if method in ("flow", "knn"):
            est = self.sensing_estimates(method, point.k)
            for i in self.indices(1):
                prev = est[i - 1]
                res = est[i]
                flags = list(res.flags)
                h_true = self.ds.channel(i)
                err, cs = _metrics(h_true, res.h, flags)
                r_prev = _rate(prev.h, h_true, snr_linear, self.scale, flags)
                r_cur = _rate(res.h, h_true, snr_linear, self.scale, flags)
                rows.append(self._row(method, point, i, err, cs, sensing_aided_se(r_prev, r_cur, acct),
                                      flags, res.encoder_calls, res.velocity_calls))
            return rows

        kwargs: Dict[str, object] = {"max_iter": self.cfg.lasso_max_iter, "tol": self.cfg.lasso_tol}
        if method == "lasso":
            lam = self.lasso_lambda(point_no, point)
            report.lasso_lambda[f"{point.variable}={point.value:g}"] = lam
            kwargs["lasso_rel_lambda"] = lam
        est = get_estimator(method, **kwargs)
        for i in self.indices(1):
            h_true = self.ds.channel(i)
            obs = simulate_pilots(h_true, point.pilots, self.pilot_rng(point_no, i))
            res = est.estimate(EstimateContext(sample=self.ds.sample(i), obs=obs))
            flags = list(res.flags)
            err, cs = _metrics(h_true, res.h, flags)
            r_cur = _rate(res.h, h_true, snr_linear, self.scale, flags)
            rows.append(self._row(method, point, i, err, cs, pilot_based_se(r_cur, acct), flags, 0, 0))
        return rows

    def _row(self, method, point, i, err, cs, se, flags, enc_calls, vel_calls) -> Dict[str, object]:
        return {
            "method": method,
            "sweep_var": point.variable,
            "value": point.value,
            "user_id": int(self.ds.arrays["user_ids"][i]),
            "frame_index": int(self.ds.arrays["frame_index"][i]),
            "nmse_linear": err,
            "nmse_db": None if err is None else clamp_db(10.0 * math.log10(err) if err > 0 else float("-inf")),
            "cossim": cs,
            "se": se,
            "encoder_calls": enc_calls,
            "velocity_calls": vel_calls,
            "flags": ";".join(sorted(set(flags))),
        }


def aggregate(method: str, point: SweepPoint, rows: Sequence[Dict[str, object]]) -> Dict[str, object]:
    """Recomputable from the per-sample rows: dB of the mean linear NMSE, plain means otherwise."""
    errs = [r["nmse_linear"] for r in rows if r["nmse_linear"] is not None]
    cs = [r["cossim"] for r in rows if r["cossim"] is not None]
    mean_err = float(np.mean(errs)) if errs else float("nan")
    return {
        "method": method,
        "sweep_var": point.variable,
        "value": point.value,
        "nmse_db": clamp_db(10.0 * math.log10(mean_err)) if mean_err > 0 else (-100.0 if errs else float("nan")),
        "cossim": float(np.mean(cs)) if cs else float("nan"),
        "se": float(np.mean([r["se"] for r in rows])) if rows else float("nan"),
        "n_samples": len(rows),
        "encoder_calls": int(max([r["encoder_calls"] for r in rows], default=0)),
        "velocity_calls": int(max([r["velocity_calls"] for r in rows], default=0)),
    }


def run_benchmark(
    ds: DatasetFile,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    cfg: EvalConfig,
    pilots: PilotConfig,
    infer: InferConfig,
    bundle: Optional[ModelBundle] = None,
    seed: int = 0,
    *,
    progress: bool = True,
) -> Report:
    """
    One aggregate row per method x sweep point. A method that cannot run
    (missing checkpoints, bad configuration) gets an error entry and is
    skipped; the others still run.
    """
    if ds.n_frames < 2:
        raise ContractError("the benchmark needs at least two frames per user (frame 1 is excluded)")
    points = sweep_points(cfg, pilots, infer)
    methods = list(cfg.methods)
    if cfg.sweep == "k" and methods != ["flow"]:
        logger.info("K sweep only evaluates the flow method")
        methods = ["flow"] if "flow" in methods else []
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown methods: {', '.join(unknown)}", field="eval.methods")

    bench = _Bench(ds, train_idx, test_idx, cfg, pilots, infer, bundle, seed, progress)
    report = Report(sweep=cfg.sweep, config={"eval": asdict(cfg), "pilots": asdict(pilots), "infer": asdict(infer)})
    logger.info("benchmark: %d test users, frames 2..%d, %d methods x %d points",
                len(bench.users), ds.n_frames, len(methods), len(points))

    for method in methods:
        failed = False
        for point_no, point in enumerate(tqdm(points, desc=method, disable=not progress)):
            try:
                rows = bench.run_method(method, point_no, point, report)
            except XfcsiError as e:
                logger.warning("method %s skipped: %s", method, e)
                report.errors.append({"method": method, "error": str(e)})
                report.issues.append(Issue(
                    severity=Severity.WARN, field="eval.methods", message=f"{method} skipped: {e}",
                    subject=method, code="method_skipped",
                ))
                failed = True
                break
            report.samples.extend(rows)
            report.rows.append(aggregate(method, point, rows))
        if failed:
            report.rows = [r for r in report.rows if r["method"] != method]
            report.samples = [r for r in report.samples if r["method"] != method]

    flagged = sum(1 for r in report.samples if r["flags"])
    if flagged:
        report.issues.append(Issue(
            severity=Severity.INFO, field="eval", message=f"{flagged} per-sample rows carry flags",
            code="flagged_samples",
        ))
    return report
