"""Config-driven experiment grids: tasks x methods x seeds -> JSON reports and CSV tables."""

from __future__ import annotations

import json
import logging
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import oracle
from .driftnet import NetConfig, save_checkpoint
from .errors import BridgeMIError, ConfigError
from .estimators import (
    EstimateReport,
    EstimatorConfig,
    ReferenceSpec,
    estimate_entropy_gaussian,
    estimate_entropy_uniform,
    estimate_kl,
    estimate_mi,
    fingerprint,
    run_infobridge,
    run_kl,
)
from .fileio import atomic_write_csv, atomic_write_json
from .numcore import Rng
from .tasks import (
    STRUCTURES,
    TRANSFORMS,
    Distribution,
    GaussianSpec,
    JointTask,
    gaussian_kl,
    make_correlated_gaussian,
    make_uniform_noise,
    sample_base,
    sample_pairs,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("infobridge", "oracle-mi", "ksg", "entropy-gaussian", "entropy-uniform", "kl", "oracle-kl")
AGGREGATE_HEADER = ["task", "method", "gt_mi", "mean_est", "std_est", "n_seeds", "mae"]
PLOT_HEADER = ["task", "method", "x", "y", "err"]

# which task kinds each method accepts
_METHOD_TASKS = {
    "infobridge": ("gaussian", "uniform-noise"),
    "oracle-mi": ("gaussian", "uniform-noise"),
    "ksg": ("gaussian", "uniform-noise"),
    "entropy-gaussian": ("distribution",),
    "entropy-uniform": ("distribution",),
    "kl": ("kl-pair",),
    "oracle-kl": ("kl-pair",),
}

_TASK_KEYS = {
    "common": {"name", "kind", "n_train", "n_test", "paper_gt"},
    "gaussian": {"dim", "structure", "rho", "target_mi", "transform", "task_seed"},
    "uniform-noise": {"noise_scale"},
    "distribution": {"distribution", "support_box"},
    "kl-pair": {"p1", "p2"},
}
_DIST_KEYS = {"kind", "dim", "params"}
_OVERRIDE_KEYS = {
    "train_steps", "batch_size", "lr", "ema_decay", "eval_tuples", "resample", "standardize",
    "epsilon", "t_min", "t_max", "net", "k", "reference", "save_checkpoint",
}  # fmt: skip
_REFERENCE_KEYS = {"kind", "variance"}
_TOP_KEYS = {"schema_version", "tasks", "methods", "seeds", "output_dir", "defaults"}


def _reject_unknown(d: dict, allowed: set, path: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError("expected a JSON object", path)
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", f"{path}.{key}" if path else key)


@dataclass
class TaskEntry:
    name: str
    kind: str
    params: dict
    n_train: int = 8000
    n_test: int = 2000
    paper_gt: float | None = None


@dataclass
class MethodEntry:
    method: str
    overrides: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """Parsed experiment document. Build it with :meth:`from_dict` / :meth:`load`."""

    tasks: list[TaskEntry]
    methods: list[MethodEntry]
    seeds: list[int]
    output_dir: str = "bridgemi-out"
    defaults: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        _reject_unknown(doc, _TOP_KEYS, "")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"expected schema_version {SCHEMA_VERSION}", "schema_version")
        seeds = doc.get("seeds")
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers", "seeds")
        defaults = doc.get("defaults", {})
        _reject_unknown(defaults, _OVERRIDE_KEYS, "defaults")
        tasks = [_parse_task(t, f"tasks[{i}]") for i, t in enumerate(doc.get("tasks") or [])]
        methods = [_parse_method(m, f"methods[{i}]") for i, m in enumerate(doc.get("methods") or [])]
        if not tasks:
            raise ConfigError("at least one task is required", "tasks")
        if not methods:
            raise ConfigError("at least one method is required", "methods")
        names = [t.name for t in tasks]
        if len(set(names)) != len(names):
            raise ConfigError("task names must be unique", "tasks")
        for i, m in enumerate(methods):
            for j, t in enumerate(tasks):
                if t.kind not in _METHOD_TASKS[m.method]:
                    raise ConfigError(
                        f"method {m.method!r} cannot run on task {t.name!r} of kind {t.kind!r}",
                        f"methods[{i}].method",
                    )
                if m.method == "entropy-uniform" and _support_box(t) is None:
                    raise ConfigError("entropy-uniform needs a support_box", f"tasks[{j}].support_box")
        cfg = cls(tasks, methods, list(seeds), str(doc.get("output_dir", "bridgemi-out")), dict(defaults))
        for i, m in enumerate(methods):
            # fail early on bad override values, not halfway through a run
            _estimator_config(cfg, m, 0, f"methods[{i}].overrides")
        for j, t in enumerate(tasks):
            build_task(t, 0, f"tasks[{j}]")
        return cfg

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tasks": [
                {"name": t.name, "kind": t.kind, "n_train": t.n_train, "n_test": t.n_test, "paper_gt": t.paper_gt, **t.params}
                for t in self.tasks
            ],
            "methods": [{"method": m.method, "overrides": m.overrides} for m in self.methods],
            "seeds": self.seeds,
            "output_dir": self.output_dir,
            "defaults": self.defaults,
        }


def _parse_task(d: dict, path: str) -> TaskEntry:
    if not isinstance(d, dict):
        raise ConfigError("expected a JSON object", path)
    kind = d.get("kind", "gaussian")
    if kind not in _TASK_KEYS or kind == "common":
        raise ConfigError(f"unknown task kind {kind!r}", f"{path}.kind")
    _reject_unknown(d, _TASK_KEYS["common"] | _TASK_KEYS[kind], path)
    if not isinstance(d.get("name"), str) or not d["name"]:
        raise ConfigError("task name is required", f"{path}.name")
    params = {k: v for k, v in d.items() if k not in _TASK_KEYS["common"]}
    for side in ("distribution", "p1", "p2"):
        if side in params:
            _reject_unknown(params[side], _DIST_KEYS, f"{path}.{side}")
    if kind in ("distribution",) and "distribution" not in params:
        raise ConfigError("distribution task needs a distribution", f"{path}.distribution")
    if kind == "kl-pair" and not ("p1" in params and "p2" in params):
        raise ConfigError("kl-pair task needs p1 and p2", path)
    n_train, n_test = d.get("n_train", 8000), d.get("n_test", 2000)
    for key, v in (("n_train", n_train), ("n_test", n_test)):
        if not isinstance(v, int) or v < 2:
            raise ConfigError("must be an integer >= 2", f"{path}.{key}")
    return TaskEntry(d["name"], kind, params, n_train, n_test, d.get("paper_gt"))


def _parse_method(d: dict, path: str) -> MethodEntry:
    if isinstance(d, str):
        d = {"method": d}
    _reject_unknown(d, {"method", "overrides"}, path)
    if d.get("method") not in METHODS:
        raise ConfigError(f"unknown method {d.get('method')!r}; expected one of {', '.join(METHODS)}", f"{path}.method")
    overrides = d.get("overrides", {})
    _reject_unknown(overrides, _OVERRIDE_KEYS, f"{path}.overrides")
    if "reference" in overrides:
        _reject_unknown(overrides["reference"], _REFERENCE_KEYS, f"{path}.overrides.reference")
    return MethodEntry(d["method"], dict(overrides))


# ---------------------------------------------------------------------------
# building tasks and estimator configs
# ---------------------------------------------------------------------------


def _distribution(d: dict, path: str) -> Distribution:
    try:
        return Distribution(d["kind"], int(d["dim"]), dict(d.get("params", {})))
    except KeyError as exc:
        raise ConfigError(f"missing {exc.args[0]!r}", path) from None


def _support_box(t: TaskEntry):
    if t.kind != "distribution":
        return None
    if "support_box" in t.params:
        return t.params["support_box"]
    dist = t.params["distribution"]
    if dist.get("kind") == "uniform-box":
        lo, hi = _distribution(dist, "").box()
        return np.stack([lo, hi], axis=1).tolist()
    return None


def build_task(t: TaskEntry, seed: int, path: str = "task"):
    """JointTask for MI kinds, Distribution for entropy, (p1, p2) for KL."""
    p = t.params
    try:
        if t.kind == "gaussian":
            structure = p.get("structure", "bivariate")
            if structure not in STRUCTURES:
                raise ConfigError(f"unknown structure {structure!r}", f"{path}.structure")
            task = make_correlated_gaussian(
                int(p.get("dim", 1)),
                structure,
                target_mi=p.get("target_mi"),
                rho=p.get("rho"),
                rng=Rng(int(p.get("task_seed", 0))),
                name=t.name,
            )
            tag = p.get("transform", "identity")
            if tag not in TRANSFORMS:
                raise ConfigError(f"unknown transform {tag!r}", f"{path}.transform")
            return task if tag == "identity" else task.with_transform(tag, name=t.name)
        if t.kind == "uniform-noise":
            return make_uniform_noise(float(p["noise_scale"]), name=t.name)
        if t.kind == "distribution":
            return _distribution(p["distribution"], f"{path}.distribution")
        return _distribution(p["p1"], f"{path}.p1"), _distribution(p["p2"], f"{path}.p2")
    except ConfigError as exc:
        if exc.field and not exc.field.startswith(path):
            raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{exc.field}") from None
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid task parameters ({exc})", path) from None


def ground_truth(t: TaskEntry, built) -> float | None:
    if t.kind in ("gaussian", "uniform-noise"):
        return built.ground_truth_mi
    if t.kind == "distribution":
        return built.entropy()
    p1, p2 = built
    if p1.kind == p2.kind == "gaussian":
        return gaussian_kl(p1.mean_vector(), p1.covariance(), p2.mean_vector(), p2.covariance())
    return None


def _estimator_config(cfg: ExperimentConfig, m: MethodEntry, seed: int, path: str) -> EstimatorConfig:
    over = {**cfg.defaults, **m.overrides}
    kw = {k: v for k, v in over.items() if k not in ("k", "reference", "save_checkpoint", "net")}
    try:
        est = EstimatorConfig(seed=seed).with_overrides(**kw)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{exc.field}") from None
    except TypeError as exc:
        raise ConfigError(f"invalid override ({exc})", path) from None
    return est


def _with_net(est: EstimatorConfig, over: dict, dim: int) -> EstimatorConfig:
    """Apply a ``net`` override (architecture fields on top of the size-based default)."""
    if "net" not in over:
        return est
    try:
        return replace(est, net=NetConfig.for_dim(dim, **over["net"]))
    except TypeError as exc:
        raise ConfigError(f"invalid net override ({exc})", "overrides.net") from None


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------


def _data_rng(seed: int, task_name: str) -> Rng:
    return Rng(seed).split(zlib.crc32(task_name.encode()))


def run_single(cfg: ExperimentConfig, t: TaskEntry, m: MethodEntry, seed: int) -> tuple[EstimateReport, float | None]:
    over = {**cfg.defaults, **m.overrides}
    est = _estimator_config(cfg, m, seed, f"methods[{m.method}].overrides")
    built = build_task(t, seed)
    gt = ground_truth(t, built)
    rng = _data_rng(seed, t.name)
    n = t.n_train + t.n_test

    if m.method in ("infobridge", "oracle-mi", "ksg"):
        task: JointTask = built
        if m.method == "infobridge":
            x0, x1 = sample_pairs(task, n, rng)
            dim = max(x0.shape[1], x1.shape[1])
            est = _with_net(est, over, dim)
            fit = run_infobridge((x0[: t.n_train], x1[: t.n_train]), (x0[t.n_train :], x1[t.n_train :]), est, task=t.name)
            report = fit.report
            if over.get("save_checkpoint"):
                extra = {"bridge": est.bridge.to_dict(), "affine": fit.affine.to_dict() if fit.affine else None}
                save_checkpoint(os.path.join(cfg.output_dir, "checkpoints", f"{t.name}__seed{seed}.json"), fit.net, extra)
        elif m.method == "oracle-mi":
            report = _oracle_mi(task, t, est, rng)
        else:
            x0, x1 = sample_pairs(task, n, rng)
            k = int(over.get("k", 1))
            value = oracle.ksg_mi(x0, x1, oracle.KsgConfig(k=k), rng=rng.split(7))
            report = EstimateReport(value, None, n, fingerprint({"method": "ksg", "k": k, "n": n}))
    elif m.method in ("entropy-gaussian", "entropy-uniform"):
        dist: Distribution = built
        samples = dist.sample(n, rng)
        ref = _reference(over, dist.dim)
        est = _with_net(est, over, dist.dim)
        train, test = samples[: t.n_train], samples[t.n_train :]
        if m.method == "entropy-gaussian":
            report = estimate_entropy_gaussian(train, ref, est, eval_samples=test)
        else:
            report = estimate_entropy_uniform(train, _support_box(t), ref, est, eval_samples=test)
    else:
        p1, p2 = built
        samples = p1.sample(n, rng)
        ref = _reference(over, p1.dim)
        if m.method == "kl":
            est = _with_net(est, over, p1.dim)
            report = run_kl(samples[: t.n_train], p2.sample, est, ref=ref, eval_samples=samples[t.n_train :])
        else:
            if not (p1.kind == p2.kind == "gaussian"):
                raise ConfigError("oracle-kl needs two gaussian distributions", f"tasks[{t.name}]")
            drift = oracle.oracle_kl_drifts(
                p1.mean_vector(), p1.covariance(), p2.mean_vector(), p2.covariance(), est.epsilon
            )
            report = estimate_kl(drift, samples[t.n_train :], ref or ReferenceSpec("standard-normal", p1.dim), est)
    report.method, report.task, report.seed, report.epsilon = m.method, t.name, seed, est.epsilon
    if m.method in ("ksg", "oracle-mi"):
        report.train_steps = 0
    return report, gt


def _reference(over: dict, dim: int) -> ReferenceSpec | None:
    r = over.get("reference")
    if r is None:
        return None
    return ReferenceSpec(r.get("kind", "standard-normal"), dim, variance=float(r.get("variance", 1.0)))


def _oracle_mi(task: JointTask, t: TaskEntry, est: EstimatorConfig, rng: Rng) -> EstimateReport:
    if isinstance(task.base, GaussianSpec):
        # MI is invariant under the elementwise transforms, so the oracle works on base samples
        x0, x1 = sample_base(task.base, t.n_test, rng)
        return estimate_mi(oracle.oracle_drift_pair(task.base, est.epsilon), x0, x1, est, rng=rng.split(3))
    value = oracle.numeric_mi_1d(task)
    return EstimateReport(value, 0.0, 0, fingerprint({"method": "numeric-quadrature", "task": t.name}))


# ---------------------------------------------------------------------------
# grid runner
# ---------------------------------------------------------------------------


@dataclass
class RunOutcome:
    task: str
    method: str
    seed: int
    record: dict | None
    error: str | None = None


def _report_path(out: str, task: str, method: str, seed: int) -> str:
    return os.path.join(out, "reports", f"{task}__{method}__seed{seed}.json")


def _execute(cfg: ExperimentConfig, t: TaskEntry, m: MethodEntry, seed: int) -> RunOutcome:
    path = _report_path(cfg.output_dir, t.name, m.method, seed)
    try:
        report, gt = run_single(cfg, t, m, seed)
    except BridgeMIError as exc:
        log.error("run %s/%s/seed %d failed: %s", t.name, m.method, seed, exc)
        atomic_write_json(path, {"task": t.name, "method": m.method, "seed": seed, "status": "failed", "error": str(exc)})
        return RunOutcome(t.name, m.method, seed, None, f"{type(exc).__name__}: {exc}")
    record = {**report.to_record(), "gt": gt, "paper_gt": t.paper_gt, "status": "ok"}
    atomic_write_json(path, record)
    log.info("%s/%s/seed %d: %.4f (gt %s)", t.name, m.method, seed, report.estimate, gt)
    return RunOutcome(t.name, m.method, seed, record)


def aggregate_rows(records: list[dict], order: list[tuple[str, str]]) -> list[list]:
    """One row per (task, method): ground truth, mean / std over seeds and mean absolute error."""
    rows = []
    for task, method in order:
        recs = sorted((r for r in records if r["task"] == task and r["method"] == method), key=lambda r: r["seed"])
        if not recs:
            continue
        est = np.array([r["estimate_nats"] for r in recs], dtype=np.float64)
        gt = recs[0]["gt"]
        mean = float(est.mean())
        std = float(est.std(ddof=1)) if est.size > 1 else 0.0
        mae = float(np.abs(est - gt).mean()) if gt is not None else None
        rows.append([task, method, gt, mean, std, len(recs), mae])
    return rows


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> int:
    """Run every (task, method, seed) and write reports plus the aggregate and plot-data CSVs.

    Returns 0 when every run succeeded and 3 otherwise; failed runs leave a
    report marked ``failed`` and are excluded from the tables.
    """
    jobs = [(t, m, s) for t in cfg.tasks for m in cfg.methods for s in cfg.seeds]
    os.makedirs(os.path.join(cfg.output_dir, "reports"), exist_ok=True)
    atomic_write_json(os.path.join(cfg.output_dir, "experiment.json"), cfg.to_dict())
    if threads <= 1:
        outcomes = [_execute(cfg, *job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda job: _execute(cfg, *job), jobs))
    records = [o.record for o in outcomes if o.record is not None]
    order = [(t.name, m.method) for t in cfg.tasks for m in cfg.methods]
    rows = aggregate_rows(records, order)
    atomic_write_csv(os.path.join(cfg.output_dir, "aggregate.csv"), AGGREGATE_HEADER, rows)
    plot_rows = [[task, method, gt, mean, std] for task, method, gt, mean, std, _, _ in rows]
    atomic_write_csv(os.path.join(cfg.output_dir, "plot_data.csv"), PLOT_HEADER, plot_rows)
    failures = [o for o in outcomes if o.error]
    for o in failures:
        log.error("failed: %s/%s/seed %d: %s", o.task, o.method, o.seed, o.error)
    return 3 if failures else 0


def resolve_threads(flag: int | None) -> int:
    """``--threads`` if given, else ``BRIDGEMI_THREADS``, else 1."""
    if flag is not None:
        n = flag
    else:
        env = os.environ.get("BRIDGEMI_THREADS", "").strip()
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"BRIDGEMI_THREADS must be an integer, got {env!r}", "BRIDGEMI_THREADS") from None
    if n < 1:
        raise ConfigError("thread count must be >= 1", "threads")
    return n

