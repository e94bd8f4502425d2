from __future__ import annotations

from typing import List, Optional

from .config import RunConfig
from .errors import ConfigError
from .estimators import list_estimators
from .evaluation import SWEEPS
from .infer import INTEGRATORS
from .model import Issue, Severity


def _add(issues: List[Issue], severity: Severity, field: str, message: str, code: str,
         subject: Optional[str] = None, suggestions=None):
    issues.append(Issue(
        severity=severity,
        field=field,
        message=message,
        subject=subject,
        code=code,
        suggestions=list(suggestions or []),
    ))


def validate_config(cfg: RunConfig) -> List[Issue]:
    """
    Range and consistency checks on a loaded RunConfig. Nothing is raised
    here; see ensure_valid.
    """
    issues: List[Issue] = []
    a, tr, p, ev, sc = cfg.arrays, cfg.train, cfg.pilots, cfg.eval, cfg.scene

    # --- arrays ---
    if a.n_bs < 1:
        _add(issues, Severity.ERROR, "arrays.n_bs", f"N_BS must be >= 1, got {a.n_bs}", "out_of_range")
    if a.n_ue < 1:
        _add(issues, Severity.ERROR, "arrays.n_ue", f"N_UE must be >= 1, got {a.n_ue}", "out_of_range")

    # --- training ---
    if tr.batch_size < 2:
        _add(issues, Severity.ERROR, "train.batch_size",
             f"batch_size must be >= 2 (contrastive negatives), got {tr.batch_size}", "out_of_range")
    if tr.epochs < 1:
        _add(issues, Severity.ERROR, "train.epochs", f"epochs must be >= 1, got {tr.epochs}", "out_of_range")
    if tr.lam < 0:
        _add(issues, Severity.ERROR, "train.lam", f"lam must be >= 0, got {tr.lam}", "out_of_range")
    if tr.sigma_min < 0:
        _add(issues, Severity.ERROR, "train.sigma_min", f"sigma_min must be >= 0, got {tr.sigma_min}", "out_of_range")
    if not tr.lr > 0:
        _add(issues, Severity.ERROR, "train.lr", f"lr must be > 0, got {tr.lr}", "out_of_range")
    if not tr.tau0 > 0:
        _add(issues, Severity.ERROR, "train.tau0", f"tau0 must be > 0, got {tr.tau0}", "out_of_range")
    if not 0.0 < tr.split_ratio < 1.0:
        _add(issues, Severity.ERROR, "train.split_ratio",
             f"split_ratio must lie in (0, 1), got {tr.split_ratio}", "out_of_range")
    if tr.sigma_min > 0:
        _add(issues, Severity.INFO, "train.sigma_min",
             "sigma_min > 0 trains on a smoothed path (ablation setting)", "ablation")
    if not tr.use_alignment:
        _add(issues, Severity.INFO, "train.use_alignment",
             "modality alignment is off: CFM-only ablation", "ablation")

    enc = tr.encoder
    if enc.feature_dim % enc.heads:
        _add(issues, Severity.ERROR, "train.encoder.heads",
             f"feature_dim {enc.feature_dim} is not divisible by heads {enc.heads}", "inconsistent")
    if enc.image_size % 8:
        _add(issues, Severity.ERROR, "train.encoder.image_size",
             f"image_size {enc.image_size} is not divisible by 8", "inconsistent")
    if enc.image_size != sc.image_size:
        _add(issues, Severity.ERROR, "train.encoder.image_size",
             f"encoder expects {enc.image_size}px images, the scene renders {sc.image_size}px", "inconsistent",
             suggestions=[f"train.encoder.image_size={sc.image_size}"])
    if enc.coord_embed_dim % 4:
        _add(issues, Severity.ERROR, "train.encoder.coord_embed_dim",
             f"coord_embed_dim {enc.coord_embed_dim} is not divisible by 4", "inconsistent")

    div = 2 ** max(tr.unet.depth, 0)
    if tr.unet.depth < 1:
        _add(issues, Severity.ERROR, "train.unet.depth", "U-Net depth must be >= 1", "out_of_range")
    elif a.n_ue % div or a.n_bs % div:
        _add(issues, Severity.ERROR, "train.unet.depth",
             f"channel map {a.n_ue}x{a.n_bs} is not divisible by 2^depth={div}", "inconsistent",
             suggestions=["lower train.unet.depth", "use array sizes that are multiples of 2^depth"])
    if tr.unet.normalization != "none":
        _add(issues, Severity.ERROR, "train.unet.normalization",
             f"unsupported normalization {tr.unet.normalization!r}", "bad_value", suggestions=["none"])

    # --- inference ---
    if cfg.infer.k < 1:
        _add(issues, Severity.ERROR, "infer.k", f"K must be >= 1, got {cfg.infer.k}", "out_of_range")
    if cfg.infer.integrator not in INTEGRATORS:
        _add(issues, Severity.ERROR, "infer.integrator",
             f"unknown integrator {cfg.infer.integrator!r}", "bad_value", suggestions=list(INTEGRATORS))

    # --- pilots ---
    if not 0.0 < p.t_ce < p.t_ca < p.t_f:
        _add(issues, Severity.ERROR, "pilots.t_ca",
             f"frame timing must satisfy 0 < T_ce < T_ca < T_f, got {p.t_ce}, {p.t_ca}, {p.t_f}", "inconsistent")
    elif int((p.t_ca - p.t_ce) / p.t_f * p.n_sym + 1e-9) < 1:
        _add(issues, Severity.ERROR, "pilots.n_sym", "pilot budget yields no pilot symbol", "out_of_range")
    elif int((p.t_ca - p.t_ce) / p.t_f * p.n_sym + 1e-9) < a.n_ue * a.n_bs:
        _add(issues, Severity.INFO, "pilots.t_ca",
             "fewer pilots than channel entries: LS is underdetermined (minimum-norm)", "underdetermined")
    for t_ca in ev.tca_values:
        if not p.t_ce < t_ca < p.t_f:
            _add(issues, Severity.ERROR, "eval.tca_values",
                 f"sweep value T_ca={t_ca} is outside (T_ce, T_f)", "out_of_range")

    # --- evaluation ---
    if ev.sweep not in SWEEPS:
        _add(issues, Severity.ERROR, "eval.sweep", f"unknown sweep {ev.sweep!r}", "bad_value",
             suggestions=list(SWEEPS))
    known = list_estimators()
    for m in ev.methods:
        if m not in known:
            _add(issues, Severity.ERROR, "eval.methods", f"unknown method {m!r}", "bad_value",
                 suggestions=sorted(known))
    if len(ev.tca_values) != len(ev.tca_k):
        _add(issues, Severity.ERROR, "eval.tca_k", "tca_values and tca_k must have the same length", "inconsistent")
    if any(k < 1 for k in ev.k_values + ev.tca_k):
        _add(issues, Severity.ERROR, "eval.k_values", "every K must be >= 1", "out_of_range")
    if ev.knn_k < 1:
        _add(issues, Severity.ERROR, "eval.knn_k", f"knn_k must be >= 1, got {ev.knn_k}", "out_of_range")
    if any(l < 0 for l in ev.lasso_grid) or not ev.lasso_grid:
        _add(issues, Severity.ERROR, "eval.lasso_grid", "lasso_grid needs non-negative values", "out_of_range")

    # --- scene ---
    if sc.n_users < 1 or sc.n_frames < 1:
        _add(issues, Severity.ERROR, "scene.n_users", "scene needs at least one user and one frame", "out_of_range")
    elif sc.n_frames < 2:
        _add(issues, Severity.WARN, "scene.n_frames",
             "a single frame per user leaves nothing to benchmark (frame 1 is excluded)", "degenerate")
    if sc.image_size % 8:
        _add(issues, Severity.ERROR, "scene.image_size", f"image_size {sc.image_size} is not divisible by 8", "inconsistent")
    if sc.n_points < 1:
        _add(issues, Severity.ERROR, "scene.n_points", "point clouds need at least one point", "out_of_range")
    if cfg.seed < 0:
        _add(issues, Severity.ERROR, "seed", f"seed must be >= 0, got {cfg.seed}", "out_of_range")

    return issues


def errors_of(issues: List[Issue]) -> List[Issue]:
    return [i for i in issues if i.severity == Severity.ERROR]


def ensure_valid(cfg: RunConfig) -> List[Issue]:
    """Raise ConfigError listing every ERROR; otherwise return the remaining issues."""
    issues = validate_config(cfg)
    errors = errors_of(issues)
    if errors:
        lines = "; ".join(f"{i.field}: {i.message}" for i in errors)
        raise ConfigError(f"invalid configuration: {lines}", field=errors[0].field)
    return issues
