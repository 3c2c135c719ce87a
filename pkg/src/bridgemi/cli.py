"""Command-line entry point: ``bridgemi {bench,estimate,entropy,kl,oracle}``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import oracle
from .driftnet import save_checkpoint
from .errors import BridgeMIError, ConfigError, DataError, NumericalError
from .estimators import (
    EstimateReport,
    EstimatorConfig,
    estimate_entropy_gaussian,
    estimate_entropy_uniform,
    estimate_mi,
    fingerprint,
    run_infobridge,
    run_kl,
)
from .experiment import ExperimentConfig, build_task, ground_truth, resolve_threads, run_experiment
from .fileio import atomic_write_json
from .numcore import Rng
from .tasks import GaussianSpec, load_csv_pairs, make_correlated_gaussian, read_csv_matrix, sample_base

log = logging.getLogger("bridgemi")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3


def _common(p: argparse.ArgumentParser, threads: bool = False) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--epsilon", type=float, default=None, help="bridge volatility (default 1.0)")
    if threads:
        p.add_argument("--threads", type=int, default=None, help="worker count (env BRIDGEMI_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")


def _training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=20_000, help="training steps")
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--test-fraction", type=float, default=0.2, help="held-out share used for estimation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bridgemi", description="Bridge-matching estimators of MI, KL and entropy.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("bench", help="run an experiment config (tasks x methods x seeds)")
    p.add_argument("--config", required=True)
    _common(p, threads=True)

    p = sub.add_parser("estimate", help="estimate MI between paired CSV samples")
    p.add_argument("--x0", required=True)
    p.add_argument("--x1", required=True)
    p.add_argument("--method", choices=("infobridge", "ksg"), default="infobridge")
    p.add_argument("--k", type=int, default=1, help="KSG neighbour count")
    p.add_argument("--checkpoint", default=None, help="write the trained network here")
    _training(p)
    _common(p)

    p = sub.add_parser("entropy", help="differential entropy of CSV samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--method", choices=("gaussian", "uniform"), default="gaussian")
    p.add_argument("--box", default=None, help="support box 'lo,hi' (all dims) or 'lo1,hi1;lo2,hi2;...'")
    _training(p)
    _common(p)

    p = sub.add_parser("kl", help="KL(p1 || p2) between two CSV sample sets")
    p.add_argument("--p1", required=True)
    p.add_argument("--p2", required=True)
    p.add_argument("--reference", choices=("standard-normal", "data-gaussian"), default="standard-normal")
    _training(p)
    _common(p)

    p = sub.add_parser("oracle", help="analytic ground truth and oracle-drift estimates, no training")
    p.add_argument("--config", default=None, help="experiment config; runs the oracle on each task")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--structure", default="bivariate")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--target-mi", type=float, default=None)
    p.add_argument("--n", type=int, default=20_000, help="evaluation pairs (x10 bridge draws each)")
    _common(p)
    return parser


def _estimator_config(args) -> EstimatorConfig:
    kw = {"seed": args.seed or 0}
    if hasattr(args, "steps"):
        kw.update(train_steps=args.steps, batch_size=args.batch_size, lr=args.lr)
    cfg = EstimatorConfig(**kw)
    if args.epsilon is not None:
        cfg = cfg.with_overrides(epsilon=args.epsilon)
    return cfg


def _split(n: int, frac: float) -> int:
    if not 0.0 < frac < 1.0:
        raise ConfigError("must lie in (0, 1)", "test-fraction")
    cut = n - int(round(frac * n))
    if cut < 2 or n - cut < 1:
        raise DataError(f"{n} rows are too few to split into train and test parts")
    return cut


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        atomic_write_json(out, report)
        log.info("wrote %s", out)
    print(text)


def cmd_bench(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out:
        cfg.output_dir = args.out
    if args.epsilon is not None:
        cfg.defaults["epsilon"] = args.epsilon
    status = run_experiment(cfg, threads=resolve_threads(args.threads))
    print(os.path.join(cfg.output_dir, "aggregate.csv"))
    return status


def cmd_estimate(args) -> int:
    x0, x1 = load_csv_pairs(args.x0, args.x1)
    cfg = _estimator_config(args)
    if args.method == "ksg":
        value = oracle.ksg_mi(x0, x1, oracle.KsgConfig(k=args.k), rng=Rng(cfg.seed))
        report = EstimateReport(value, None, x0.shape[0], fingerprint({"method": "ksg", "k": args.k}), method="ksg")
    else:
        cut = _split(x0.shape[0], args.test_fraction)
        fit = run_infobridge((x0[:cut], x1[:cut]), (x0[cut:], x1[cut:]), cfg)
        report = fit.report
        if args.checkpoint:
            extra = {"bridge": cfg.bridge.to_dict(), "affine": fit.affine.to_dict() if fit.affine else None}
            save_checkpoint(args.checkpoint, fit.net, extra)
    report.task, report.seed, report.epsilon = "csv", cfg.seed, cfg.epsilon
    _emit(report.to_record(), args.out)
    return 0


def _parse_box(text: str | None, dim: int) -> np.ndarray:
    if text is None:
        raise ConfigError("uniform entropy needs --box", "box")
    try:
        parts = [[float(v) for v in chunk.split(",")] for chunk in text.split(";") if chunk.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {text!r}", "box") from None
    if any(len(p) != 2 for p in parts) or len(parts) not in (1, dim):
        raise ConfigError(f"expected 1 or {dim} 'lo,hi' pairs", "box")
    return np.array(parts * dim if len(parts) == 1 else parts)


def cmd_entropy(args) -> int:
    x = read_csv_matrix(args.samples)
    cfg = _estimator_config(args)
    cut = _split(x.shape[0], args.test_fraction)
    if args.method == "gaussian":
        report = estimate_entropy_gaussian(x[:cut], None, cfg, eval_samples=x[cut:])
    else:
        report = estimate_entropy_uniform(x[:cut], _parse_box(args.box, x.shape[1]), None, cfg, eval_samples=x[cut:])
    report.task = os.path.basename(args.samples)
    _emit(report.to_record(), args.out)
    return 0


def cmd_kl(args) -> int:
    p1 = read_csv_matrix(args.p1)
    p2 = read_csv_matrix(args.p2)
    cfg = _estimator_config(args)
    cut = _split(p1.shape[0], args.test_fraction)
    report = run_kl(p1[:cut], p2, cfg, ref=args.reference, eval_samples=p1[cut:])
    report.task = f"{os.path.basename(args.p1)}||{os.path.basename(args.p2)}"
    _emit(report.to_record(), args.out)
    return 0


def cmd_oracle(args) -> int:
    seed = args.seed or 0
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        rows = []
        for i, t in enumerate(cfg.tasks):
            built = build_task(t, seed, f"tasks[{i}]")
            rows.append({"task": t.name, "gt": ground_truth(t, built), "paper_gt": t.paper_gt})
        _emit({"tasks": rows}, args.out)
        return 0
    task = make_correlated_gaussian(args.dim, args.structure, target_mi=args.target_mi, rho=args.rho, rng=Rng(seed))
    spec: GaussianSpec = task.base
    eps = args.epsilon if args.epsilon is not None else 1.0
    cfg = EstimatorConfig(seed=seed).with_overrides(epsilon=eps)
    x0, x1 = sample_base(spec, args.n, Rng(seed).split(11))
    report = estimate_mi(oracle.oracle_drift_pair(spec, eps), x0, x1, cfg)
    report.method, report.task = "oracle-mi", task.name
    _emit({**report.to_record(), "gt": oracle.analytic_gaussian_mi(spec)}, args.out)
    return 0


_COMMANDS = {"bench": cmd_bench, "estimate": cmd_estimate, "entropy": cmd_entropy, "kl": cmd_kl, "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        if isinstance(exc, OSError):
            msg = f"{exc.strerror}: {exc.filename}"
        else:
            msg = str(exc)
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except BridgeMIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
