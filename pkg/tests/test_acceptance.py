"""Acceptance criteria, one test per criterion.

Each test appends a PASS/FAIL line to ``LINES``; ``conftest.py`` prints them in
the terminal summary. Run on its own with ``pytest tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

import trained
from bridgemi import oracle
from bridgemi.estimators import EstimatorConfig, estimate_kl, estimate_mi, ReferenceSpec
from bridgemi.numcore import Rng
from bridgemi.tasks import make_correlated_gaussian, sample_base, sample_pairs

LINES: list[str] = []
HERE = os.path.dirname(os.path.abspath(__file__))


def _check(label: str, ok: bool, detail: str) -> None:
    LINES.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    print(LINES[-1])
    assert ok, detail


# 1 ------------------------------------------------------------------------------


@pytest.mark.parametrize("dim,structure,table", [(1, "bivariate", 0.41), (3, "two-pair", 1.02), (50, "dense", 1.62)])
def test_c1_oracle_unbiased(dim, structure, table):
    task = make_correlated_gaussian(dim, structure)
    start = time.perf_counter()
    x0, x1 = sample_base(task.base, 20_000, Rng(0).split(1))
    rep = estimate_mi(oracle.oracle_drift_pair(task.base, 1.0), x0, x1, EstimatorConfig())
    elapsed = time.perf_counter() - start
    gt = task.ground_truth_mi
    tol = max(0.02, 4 * rep.std_error)
    ok = rep.n_tuples == 200_000 and abs(rep.estimate - gt) <= tol and elapsed < 60.0
    _check(
        f"1 oracle {task.name} (table {table})",
        ok,
        f"est {rep.estimate:.4f} gt {gt:.4f} |err| {abs(rep.estimate - gt):.4f} <= {tol:.4f}, {elapsed:.1f}s < 60s",
    )


# 2-5 ----------------------------------------------------------------------------


@pytest.mark.slow
def test_c2_trained_bivariate():
    fits = [trained.gaussian_mi(1, "bivariate", seed) for seed in range(3)]
    est = [f.report.estimate for f in fits]
    times = [f.report.wall_time for f in fits]
    gt = fits[0].ground_truth
    mean = float(np.mean(est))
    ok = abs(mean - gt) <= 0.05 and max(times) <= 600.0
    _check(
        "2 trained bivariate rho=0.75",
        ok,
        f"mean {mean:.4f} over seeds {[round(e, 4) for e in est]} gt {gt:.4f} tol 0.05; "
        f"max wall {max(times):.0f}s <= 600s",
    )


@pytest.mark.slow
def test_c3_trained_two_pair_3x3():
    fit = trained.gaussian_mi(3, "two-pair", 0)
    err = abs(fit.report.estimate - fit.ground_truth)
    _check("3 trained two-pair 3x3", err <= 0.10, f"est {fit.report.estimate:.4f} gt {fit.ground_truth:.4f} |err| {err:.4f} <= 0.10")


@pytest.mark.slow
def test_c4_trained_half_cube_3x3():
    fit = trained.gaussian_mi(3, "two-pair", 0, transform="half-cube")
    err = abs(fit.report.estimate - fit.ground_truth)
    _check("4 trained half-cube 3x3", err <= 0.15, f"est {fit.report.estimate:.4f} gt {fit.ground_truth:.4f} |err| {err:.4f} <= 0.15")


@pytest.mark.slow
def test_c5_high_mi_d20():
    fit = trained.gaussian_mi(20, "paired", 0, target_mi=10.0, epsilon=0.01, steps=40_000)
    est = fit.report.estimate
    _check(
        "5 high-MI d=20 gt 10",
        9.0 <= est <= 11.5,
        f"est {est:.3f} in [9.0, 11.5] (gt {fit.ground_truth:.3f}, eps 0.01, 40k steps)",
    )


# 6 ------------------------------------------------------------------------------


def test_c6_ksg_baseline():
    x0, x1 = sample_pairs(make_correlated_gaussian(1, "bivariate"), 10_000, Rng(0).split(6))
    est = oracle.ksg_mi(x0, x1, oracle.KsgConfig(k=1))
    _check("6 KSG bivariate N=1e4 k=1", abs(est - 0.42) <= 0.05, f"est {est:.4f} target 0.42 tol 0.05")


# 7 ------------------------------------------------------------------------------


@pytest.mark.slow
def test_c7_kl_trained_and_oracle():
    rep = trained.gaussian_kl(0.0, 1.0, 1.0, 1.0)
    x1 = Rng(0).split(7).normal((20_000, 1))
    drift = oracle.oracle_kl_drifts(np.zeros(1), np.eye(1), np.ones(1), np.eye(1), 1.0)
    orc = estimate_kl(drift, x1, ReferenceSpec("standard-normal", 1), EstimatorConfig())
    ok = abs(rep.estimate - 0.5) <= 0.06 and abs(orc.estimate - 0.5) <= 0.02
    _check(
        "7 KL N(0,1)||N(1,1)",
        ok,
        f"trained {rep.estimate:.4f} (tol 0.06), oracle {orc.estimate:.4f} (tol 0.02), gt 0.5",
    )


# 8 ------------------------------------------------------------------------------


@pytest.mark.slow
def test_c8_entropy():
    unif = trained.uniform_entropy(3, 2.0).estimate
    expo = trained.gaussian_entropy("exponential", 10).estimate
    ok = abs(unif - 3 * math.log(2.0)) <= 0.12 and abs(expo - 10.0) <= 0.5
    _check(
        "8 entropy",
        ok,
        f"U([0,2]^3) {unif:.4f} vs {3 * math.log(2.0):.4f} (tol 0.12); Exp(1)^10 {expo:.3f} vs 10 (tol 0.5)",
    )


# 9 ------------------------------------------------------------------------------

PROPERTY_SUITES = [
    "test_driftnet.py::test_gradient_matches_finite_differences",
    "test_bridge.py::test_pinned_marginal_moments",
    "test_bridge.py::test_bridge_point_midpoint_variance",
    "test_estimators.py::test_estimates_are_nonnegative",
    "test_estimators.py::test_zero_init_net_gives_exact_zero",
    "test_experiment_cli.py::test_rerun_gives_identical_aggregate_bytes",
    "test_oracle.py::test_mi_invariant_under_blockwise_rotation",
    "test_oracle.py::test_oracle_consistent_across_epsilon",
]


def test_c9_property_suites():
    cmd = [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_SUITES]
    proc = subprocess.run(cmd, cwd=HERE, capture_output=True, text=True)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-300:]
    _check("9 property suites", proc.returncode == 0 and "failed" not in summary, summary)
