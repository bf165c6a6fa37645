"""Command line: prepare, train, evaluate, sweep, compare.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .config import ExperimentConfig
from .data import ConfigError, DataError, prepare_movielens, prepare_synthetic
from .experiment import (baseline_of, compare_table, fmt, load_splits, metrics_table, run, with_seed)
from .metrics import evaluate
from .train import DivergenceError

log = logging.getLogger("hamur")

AXES = {"k": "rank", "hyper_dim": "hyper_dim"}


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = with_seed(cfg, args.seed)
    out = args.out or os.environ.get("HAMUR_OUT")
    if out:
        cfg = cfg.replace(output={"dir": out})
    return cfg


def cmd_prepare(args) -> int:
    if args.dataset == "movielens":
        if not args.raw:
            raise ConfigError("--raw is required for movielens")
        spec = prepare_movielens(args.raw, args.out)
    elif args.dataset == "synthetic":
        spec = prepare_synthetic(args.out, n=args.n, num_domains=args.domains, seed=args.seed or 0)
    else:
        raise ConfigError(f"unknown dataset {args.dataset!r}; expected movielens or synthetic")
    print(f"wrote {args.out} ({len(spec.fields)} fields, {spec.num_domains} domains)")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    res = run(cfg, cfg.output.dir)
    sys.stdout.write(metrics_table(res.test))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    ckpt = args.checkpoint or str(Path(cfg.output.dir) / "checkpoint.bin")
    try:
        model, _ = load_checkpoint(ckpt, cfg)
    except CheckpointError as e:
        raise DataError(str(e)) from e
    _, _, test = load_splits(cfg)
    sys.stdout.write(metrics_table(evaluate(model, test, cfg.train.eval_batch_size)))
    return 0


def _sweep_one(cfg: ExperimentConfig, field: str, value: int, out_dir: str):
    try:
        res = run(cfg.replace(model={field: value}), Path(out_dir) / f"{field}={value}")
        return value, res.test["total"]["auc"], None
    except Exception as e:  # a failed point is recorded, the sweep goes on
        return value, None, f"{type(e).__name__}: {e}"


def cmd_sweep(args) -> int:
    if args.axis not in AXES:
        raise ConfigError(f"--axis must be one of {sorted(AXES)}, got {args.axis!r}")
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated integers, got {args.values!r}") from None
    cfg = _load_config(args)
    field = AXES[args.axis]
    jobs = [(cfg, field, v, cfg.output.dir) for v in values]
    if args.parallel:
        with ProcessPoolExecutor() as pool:
            rows = list(pool.map(_sweep_one, *zip(*jobs)))
    else:
        rows = [_sweep_one(*j) for j in jobs]
    print(f"{args.axis}\ttotal_auc")
    for value, auc, err in rows:
        print(f"{value}\t{fmt(auc) if auc is not None else 'nan'}")
        if err:
            log.error("sweep %s=%s failed: %s", args.axis, value, err)
    return 0


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    splits = load_splits(cfg)
    out = Path(cfg.output.dir)
    base = run(baseline_of(cfg), out / "backbone", splits)
    hamur = run(cfg, out / "hamur", splits)
    sys.stdout.write(compare_table(base.test, hamur.test))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hamur", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("prepare", help="raw data -> canonical CSV + spec sidecar")
    pr.add_argument("--dataset", required=True)
    pr.add_argument("--raw", help="directory holding ratings.dat/users.dat/movies.dat")
    pr.add_argument("--out", required=True, help="output CSV path")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--n", type=int, default=10_000)
    pr.add_argument("--domains", type=int, default=3)
    pr.set_defaults(func=cmd_prepare)

    for name, func in (("train", cmd_train), ("evaluate", cmd_evaluate), ("sweep", cmd_sweep),
                       ("compare", cmd_compare)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        if name == "evaluate":
            sp.add_argument("--checkpoint")
        if name == "sweep":
            sp.add_argument("--axis", required=True)
            sp.add_argument("--values", required=True)
            sp.add_argument("--parallel", action="store_true")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except DivergenceError as e:
        print(f"numerical divergence: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
