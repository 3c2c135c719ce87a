import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import trained
from bridgemi import estimators as E
from bridgemi import oracle
from bridgemi.driftnet import DriftNet, NetConfig
from bridgemi.errors import (
    DimensionMismatch,
    InsufficientSamples,
    NonFiniteLoss,
    SampleOutsideSupport,
)
from bridgemi.numcore import Rng
from bridgemi.tasks import make_correlated_gaussian, sample_base, sample_pairs

CFG = E.EstimatorConfig()


def _pairs(n=500, dim=2, seed=0):
    r = Rng(seed)
    return r.normal((n, dim)), r.normal((n, dim))


class _LinearDrift:
    """Flag-dependent linear drift used as a stand-in for a trained net."""

    def __init__(self, w1, w0):
        self.w1, self.w0 = w1, w0

    def __call__(self, xt, t, x0, s):
        s = np.asarray(s).reshape(-1, 1)
        feats = np.hstack([xt, x0, np.asarray(t).reshape(-1, 1)])
        return s * (feats @ self.w1) + (1 - s) * (feats @ self.w0)


# -- fast structural properties ------------------------------------------------


def test_zero_init_net_gives_exact_zero():
    x0, x1 = _pairs()
    rep = E.estimate_mi(DriftNet(NetConfig.for_dim(2), rng=3), x0, x1, CFG)
    assert rep.estimate == 0.0 and rep.std_error == 0.0
    assert rep.n_tuples == 10 * 500


def test_zero_steps_pipeline_gives_zero():
    x0, x1 = _pairs(200, 1)
    fit = E.run_infobridge((x0[:150], x1[:150]), (x0[150:], x1[150:]), CFG.with_overrides(train_steps=0))
    assert fit.report.estimate == 0.0 and fit.history == []


@pytest.mark.parametrize("eps", [0.5, 1.0, 3.0])
def test_constant_gap_closed_form(eps):
    d, g = 3, 0.7
    drift = lambda xt, t, x0, s: np.asarray(s).reshape(-1, 1) * np.full_like(xt, g)  # noqa: E731
    x0, x1 = _pairs(300, d)
    rep = E.estimate_mi(drift, x0, x1, CFG.with_overrides(epsilon=eps))
    assert rep.estimate == pytest.approx(d * g * g / (2 * eps), rel=1e-13)
    assert rep.std_error == pytest.approx(0.0, abs=1e-13)


def test_oracle_drift_two_pair_5d():
    task = make_correlated_gaussian(5, "two-pair")
    x0, x1 = sample_base(task.base, 20_000, Rng(11))
    rep = E.estimate_mi(oracle.oracle_drift_pair(task.base, 1.0), x0, x1, CFG)
    assert rep.n_tuples == 200_000
    assert abs(rep.estimate - 1.02) <= 0.02


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 5.0))
@settings(max_examples=25)
def test_estimates_are_nonnegative(seed, eps):
    r = np.random.default_rng(seed)
    drift = _LinearDrift(r.normal(size=(5, 2)), r.normal(size=(5, 2)))
    x0, x1 = _pairs(50, 2, seed % 1000)
    cfg = CFG.with_overrides(epsilon=eps, resample=2)
    assert E.estimate_mi(drift, x0, x1, cfg).estimate >= 0.0
    rep = E.estimate_kl(drift, x1, E.ReferenceSpec("standard-normal", 2), cfg)
    assert rep.estimate >= 0.0 and rep.std_error >= 0.0


def test_shared_drift_gives_zero_kl():
    drift = oracle.GaussianDrift.from_marginal(np.zeros(2), np.eye(2), 1.0)
    shared = lambda xt, t, x0, s: drift(xt, t, x0)  # noqa: E731
    rep = E.estimate_kl(shared, Rng(0).normal((400, 2)), E.ReferenceSpec("standard-normal", 2), CFG)
    assert rep.estimate == 0.0


@pytest.mark.parametrize("mean2,var2", [(1.0, 1.0), (0.0, 4.0)])
def test_oracle_kl_matches_closed_form(mean2, var2):
    gt = 0.5 * ((1.0 + mean2**2) / var2 + math.log(var2) - 1.0)
    drifts = oracle.oracle_kl_drifts(np.zeros(1), np.eye(1), np.full(1, mean2), var2 * np.eye(1), 1.0)
    x1 = Rng(1).normal((20_000, 1))
    rep = E.estimate_kl(drifts, x1, E.ReferenceSpec("standard-normal", 1), CFG)
    assert abs(rep.estimate - gt) <= 0.02


def test_oracle_kl_independent_of_reference():
    drifts = oracle.oracle_kl_drifts(np.zeros(1), np.eye(1), np.zeros(1), 4.0 * np.eye(1), 1.0)
    x1 = Rng(2).normal((20_000, 1))
    a = E.estimate_kl(drifts, x1, E.ReferenceSpec("standard-normal", 1), CFG)
    b = E.estimate_kl(drifts, x1, E.ReferenceSpec("scaled-normal", 1, variance=4.0), CFG)
    assert abs(a.estimate - b.estimate) <= 4 * math.hypot(a.std_error, b.std_error)


def test_kl_dimension_checks():
    with pytest.raises(DimensionMismatch):
        E.train_kl_bridges(np.zeros((10, 2)), np.zeros((10, 3)), E.ReferenceSpec("standard-normal", 2), CFG)
    with pytest.raises(DimensionMismatch):
        E.estimate_kl(lambda *a: 0.0, np.zeros((10, 2)), E.ReferenceSpec("standard-normal", 1), CFG)


def test_entropy_preconditions():
    with pytest.raises(SampleOutsideSupport):
        E.estimate_entropy_uniform(np.array([[0.5], [2.5]]), [[0.0, 2.0]], None, CFG)
    with pytest.raises(DimensionMismatch):
        E.estimate_entropy_uniform(np.ones((5, 2)), [[0.0, 2.0]] * 3, None, CFG)
    with pytest.raises(InsufficientSamples):
        E.estimate_entropy_gaussian(np.ones((1, 1)), None, CFG)


def test_zero_step_entropy_is_reference_entropy():
    x = Rng(0).uniform(0.0, 2.0, (100, 3))
    rep = E.estimate_entropy_uniform(x, [[0.0, 2.0]] * 3, None, CFG.with_overrides(train_steps=0))
    assert rep.estimate == pytest.approx(3 * math.log(2.0), rel=1e-15)


def test_worker_count_does_not_change_results():
    task = make_correlated_gaussian(2, "two-pair")
    x0, x1 = sample_base(task.base, 10_000, Rng(3))
    drift = oracle.oracle_drift_pair(task.base, 1.0)
    one = E.estimate_mi(drift, x0, x1, CFG)
    three = E.estimate_mi(drift, x0, x1, CFG, workers=3)
    assert one.estimate == three.estimate and one.std_error == three.std_error


def test_estimation_is_deterministic():
    x0, x1 = _pairs()
    drift = _LinearDrift(np.eye(5, 2), np.zeros((5, 2)))
    assert E.estimate_mi(drift, x0, x1, CFG).estimate == E.estimate_mi(drift, x0, x1, CFG).estimate
    other = E.estimate_mi(drift, x0, x1, CFG.with_overrides(seed=1)).estimate
    assert other != E.estimate_mi(drift, x0, x1, CFG).estimate


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_non_finite_loss_aborts_with_checkpoint():
    x0 = np.full((20, 1), 1e300)
    with pytest.raises(NonFiniteLoss) as info:
        E.train_infobridge(x0, x0, CFG.with_overrides(train_steps=5, standardize=False))
    assert info.value.step == 1 and info.value.checkpoint is not None


_FIELDS = {
    "train_steps": 19_999,
    "batch_size": 128,
    "lr": 1e-4,
    "ema_decay": 0.99,
    "eval_tuples": 1000,
    "resample": 3,
    "seed": 7,
    "standardize": False,
    "epsilon": 0.5,
    "t_min": 0.01,
    "t_max": 0.99,
}


@given(st.sets(st.sampled_from(sorted(_FIELDS))))
def test_fingerprints_differ_iff_config_differs(changed):
    cfg = CFG.with_overrides(**{k: _FIELDS[k] for k in changed})
    assert (cfg.fingerprint() == CFG.fingerprint()) == (not changed)
    assert E.EstimatorConfig.from_dict(cfg.to_dict()).fingerprint() == cfg.fingerprint()


def test_report_record_keys():
    rec = E.EstimateReport(0.1, 0.01, 10, "abc").to_record()
    assert {"method", "task", "seed", "epsilon", "estimate_nats", "std_error", "n_tuples", "train_steps",
            "wall_time_s", "truncation_bound", "config_fingerprint"} == set(rec)  # fmt: skip


# -- trained properties (full 20k-step runs) -------------------------------------


@pytest.mark.slow
def test_trained_independent_pair_near_zero():
    assert abs(trained.gaussian_mi(1, "bivariate", 0, rho=0.0).report.estimate) <= 0.02


@pytest.mark.slow
def test_trained_bivariate_default():
    fit = trained.gaussian_mi(1, "bivariate", 0)
    assert abs(fit.report.estimate - 0.41) <= 0.05


@pytest.mark.slow
def test_trained_same_distribution_kl_near_zero():
    assert trained.same_pool_kl().estimate <= 0.03


@pytest.mark.slow
def test_trained_kl_unequal_variance():
    assert abs(trained.gaussian_kl(0.0, 1.0, 0.0, 4.0).estimate - 0.5 * (0.25 + math.log(4.0) - 1.0)) <= 0.05


@pytest.mark.slow
def test_trained_kl_both_directions():
    assert abs(trained.gaussian_kl(0.0, 1.0, 1.0, 1.0).estimate - 0.5) <= 0.05
    assert abs(trained.gaussian_kl(1.0, 1.0, 0.0, 1.0).estimate - 0.5) <= 0.05


@pytest.mark.slow
def test_trained_gaussian_entropy():
    assert abs(trained.gaussian_entropy("gaussian", 2).estimate - math.log(2 * math.pi * math.e)) <= 0.1


@pytest.mark.slow
def test_trained_unit_cube_entropy():
    assert abs(trained.uniform_entropy(3, 1.0).estimate) <= 0.1


@pytest.mark.slow
def test_standardization_leaves_trained_estimate_unchanged():
    """Five seeds with and without the standardization step agree within 2 seed-stds."""
    with_std = [trained.rescaled_bivariate(True, seed) for seed in range(5)]
    without = [trained.rescaled_bivariate(False, seed) for seed in range(5)]
    tol = 2 * max(np.std(with_std, ddof=1), np.std(without, ddof=1))
    assert abs(np.mean(with_std) - np.mean(without)) <= tol, (with_std, without)
