from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from core.config import RunConfig, apply_overrides, load_config
from core.errors import ConfigError, XfcsiError
from core.evaluation import SWEEPS
from core.formatting import format_table
from core.model import Severity
from core.paths import default_config_path
from core.pipeline import run_benchmark, run_generate, run_infer, run_train
from core.validate import ensure_valid

logger = logging.getLogger("xfcsi")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load(args: argparse.Namespace) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif default_config_path().is_file():
        cfg = load_config(default_config_path())
    else:
        cfg = RunConfig()
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    for issue in ensure_valid(cfg):
        if issue.severity == Severity.WARN:
            logger.warning("%s: %s", issue.field, issue.message)
        else:
            logger.info("%s: %s", issue.field, issue.message)
    return cfg


def cmd_generate(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.paths.data)
    stats = run_generate(cfg, out, command=argv, progress=not args.quiet)
    print("=== DATASET ===")
    print("file        :", stats.path)
    print("samples     :", stats.samples)
    print("users/frames:", f"{stats.users} x {stats.frames}")
    print("blocked     :", stats.blocked)
    print("content hash:", stats.content_hash)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = _load(args)
    stats = run_train(cfg, args.data or cfg.paths.data, args.out or cfg.paths.out,
                      command=argv, progress=not args.quiet)
    f = stats.final
    print("=== TRAIN ===")
    print("epochs      :", stats.epochs)
    print("final loss  :", f"{f.get('total', float('nan')):.5f}",
          f"(cfm {f.get('cfm_loss', float('nan')):.5f}, contrastive {f.get('contrastive_loss', float('nan')):.5f}, "
          f"kl {f.get('kl_loss', float('nan')):.3f})")
    if f.get("test_nmse_db") is not None:
        print("test NMSE   :", f"{f['test_nmse_db']:.2f} dB")
    print()
    print("=== CHECKPOINTS ===")
    print("encoder     :", stats.encoder_path)
    print("velocity    :", stats.velocity_path)
    print("history     :", stats.out_dir / "history.csv")
    print("hash        :", stats.checkpoint_hash)
    return EXIT_OK


def cmd_infer(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = _load(args)
    stats = run_infer(cfg, args.ckpt or cfg.paths.out, args.data or cfg.paths.data, args.index,
                      k=args.K, trace_path=args.trace)
    print("=== INFER ===")
    print("sample      :", stats.index)
    print("K           :", stats.k)
    if stats.nmse_db is None:
        print("NMSE        : undefined (zero ground-truth channel)")
    else:
        print("NMSE        :", f"{stats.nmse_db:.3f} dB")
        print("cossim      :", f"{stats.cossim:.4f}")
    print("calls       :", f"encoder x{stats.encoder_calls}, velocity x{stats.velocity_calls}")
    if args.trace:
        print("trace       :", args.trace, f"({len(stats.trace)} rows)")
    return EXIT_OK


def cmd_benchmark(args: argparse.Namespace, argv: Sequence[str]) -> int:
    cfg = _load(args)
    if args.sweep:
        cfg = apply_overrides(cfg, [f"eval.sweep={args.sweep}"])
    out = args.out or str(Path(cfg.paths.out) / f"bench_{cfg.eval.sweep}")
    stats = run_benchmark(cfg, args.data or cfg.paths.data, args.ckpt, out,
                          command=argv, progress=not args.quiet)
    rep = stats.report
    print("=== RESULTS ===")
    print(format_table(rep.rows))
    print()
    if rep.lasso_lambda:
        print("=== LASSO lambda1 (relative) ===")
        for k, v in rep.lasso_lambda.items():
            print(f"{k}: {v:g}")
        print()
    if rep.errors:
        print("=== SKIPPED ===")
        for e in rep.errors:
            print(f" - {e['method']}: {e['error']}")
        print()
    print("=== OUTPUT ===")
    for p in stats.outputs:
        print(p)
    return EXIT_OK if rep.succeeded() else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="xfcsi",
        description="Sensing-aided channel inference: dataset generation, flow-matching training, inference and benchmarks.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="run config JSON (default: configs/desk.json)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key, e.g. train.epochs=5 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="no progress bars")

    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", parents=[common], help="simulate the paired sensing/channel dataset")
    g.add_argument("--out", default=None, help="dataset file (default: paths.data)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train encoder + velocity field")
    t.add_argument("--data", default=None, help="dataset file (default: paths.data)")
    t.add_argument("--out", default=None, help="run directory for checkpoints (default: paths.out)")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", parents=[common], help="infer the channel of one dataset sample")
    i.add_argument("--ckpt", default=None, help="run directory or encoder.ckpt (default: paths.out)")
    i.add_argument("--data", default=None, help="dataset file (default: paths.data)")
    i.add_argument("--index", type=int, required=True, help="sample index")
    i.add_argument("--K", type=int, default=None, help="integration steps (default: infer.k)")
    i.add_argument("--trace", default=None, help="write per-step NMSE/cossim CSV here")
    i.set_defaults(func=cmd_infer)

    b = sub.add_parser("benchmark", parents=[common], help="compare flow, LS, LASSO and KNN over a sweep")
    b.add_argument("--data", default=None, help="dataset file (default: paths.data)")
    b.add_argument("--ckpt", default=None, help="run directory of the flow model (flow is skipped without it)")
    b.add_argument("--sweep", default=None, choices=list(SWEEPS), help="sweep variable (default: eval.sweep)")
    b.add_argument("--out", default=None, help="report directory")
    b.set_defaults(func=cmd_benchmark)

    return p


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args, ["xfcsi"] + argv)
    except (ConfigError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (XfcsiError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
