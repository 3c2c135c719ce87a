"""InfoBridge training, the drift-difference MI and KL estimators, and entropy on top of KL.

Mutual information is the Girsanov KL between the bridge mixture over the
joint coupling and the one over the product of marginals, both conditioned on
the start point::

    I(X0; X1) = 1/(2 eps) * int_0^1 E ||v_joint(x_t, t, x0) - v_ind(x_t, t, x0)||^2 dt

One network with a binary flag input learns both drifts (flag 1: joint
pairs, flag 0: pairs with ``x1`` permuted across the batch).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .bridge import BridgeConfig, bridge_target, make_training_batch, sample_bridge_point, sample_time
from .driftnet import DriftNet, NetConfig, adam_step, ema_update
from .errors import (
    ConfigError,
    DimensionMismatch,
    InsufficientSamples,
    NonFiniteLoss,
    NotPositiveDefinite,
    SampleOutsideSupport,
    SingularCovariance,
)
from .numcore import Rng, RunningStats, as_rng, cholesky, logdet_spd, running_stats_finalize
from .tasks import AffineRecord, pad_to_common_dim, standardize

log = logging.getLogger(__name__)

_EVAL_CHUNK = 32768
_EDGE_FRACTION = 0.02


@dataclass(frozen=True)
class EstimatorConfig:
    """Everything that determines a training + estimation run.

    ``net=None`` picks the width from the data dimension at training time.
    ``eval_tuples=None`` uses ``resample`` bridge draws per evaluation pair.
    """

    bridge: BridgeConfig = field(default_factory=BridgeConfig)
    net: NetConfig | None = None
    train_steps: int = 20_000
    batch_size: int = 256
    lr: float = 3e-4
    ema_decay: float = 0.999
    eval_tuples: int | None = None
    resample: int = 10
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.train_steps < 0:
            raise ConfigError("train_steps must be >= 0", "train_steps")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2", "batch_size")
        if self.eval_tuples is not None and self.eval_tuples < 1:
            raise ConfigError("eval_tuples must be >= 1", "eval_tuples")
        if self.resample < 1:
            raise ConfigError("resample must be >= 1", "resample")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigError("ema_decay must lie in [0, 1]", "ema_decay")

    @property
    def epsilon(self) -> float:
        return self.bridge.epsilon

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorConfig":
        d = dict(d)
        bridge = BridgeConfig(**d.pop("bridge", {}))
        net = d.pop("net", None)
        return cls(bridge=bridge, net=NetConfig(**net) if net else None, **d)

    def with_overrides(self, **kw) -> "EstimatorConfig":
        bridge_kw = {k: kw.pop(k) for k in ("epsilon", "t_min", "t_max") if k in kw}
        cfg = replace(self, **kw) if kw else self
        if bridge_kw:
            cfg = replace(cfg, bridge=replace(cfg.bridge, **bridge_kw))
        return cfg

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def fingerprint(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


@dataclass
class TrainStepRecord:
    step: int
    loss_joint: float
    loss_ind: float


@dataclass
class EstimateReport:
    estimate: float
    std_error: float
    n_tuples: int
    config_fingerprint: str
    wall_time: float = 0.0
    truncation_bound: float = 0.0
    method: str = "infobridge"
    task: str = ""
    seed: int = 0
    epsilon: float = 1.0
    train_steps: int = 0

    def to_record(self) -> dict:
        """JSON record written for every (task, method, seed) run."""
        return {
            "method": self.method,
            "task": self.task,
            "seed": self.seed,
            "epsilon": self.epsilon,
            "estimate_nats": self.estimate,
            "std_error": self.std_error,
            "n_tuples": self.n_tuples,
            "train_steps": self.train_steps,
            "wall_time_s": self.wall_time,
            "truncation_bound": self.truncation_bound,
            "config_fingerprint": self.config_fingerprint,
        }


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _as_pairs(x0, x1) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    x0 = x0.reshape(len(x0), -1)
    x1 = x1.reshape(len(x1), -1)
    if x0.shape[0] != x1.shape[0]:
        raise DimensionMismatch(f"{x0.shape[0]} x0 rows but {x1.shape[0]} x1 rows")
    d = max(x0.shape[1], x1.shape[1])
    return pad_to_common_dim(x0, d), pad_to_common_dim(x1, d)


def _resolve_net(cfg: EstimatorConfig, dim: int) -> NetConfig:
    if cfg.net is None:
        return NetConfig.for_dim(dim)
    if cfg.net.data_dim != dim:
        raise DimensionMismatch(f"net expects dimension {cfg.net.data_dim}, data has {dim}")
    return cfg.net


def _flag_step(net: DriftNet, xt, t, x0, target, s, cfg: EstimatorConfig, step: int) -> TrainStepRecord:
    """One Adam + EMA update on the stacked flag-1 / flag-0 batch."""
    half = xt.shape[0] // 2
    out = net.forward(xt, t, x0, s, keep_cache=True)
    resid = out - target
    sq = (resid * resid).sum(axis=1)
    l1 = float(sq[:half].mean())
    l2 = float(sq[half:].mean())
    if not (math.isfinite(l1) and math.isfinite(l2)):
        raise NonFiniteLoss(step, checkpoint=net.copy())
    # backward returns grad of (1/2n)||r||^2 over 2*half rows; L1 + L2 is 4x that
    grad = 4.0 * net.backward(resid)
    adam_step(net, grad, cfg.lr)
    ema_update(net, cfg.ema_decay)
    return TrainStepRecord(step, l1, l2)


def _flags(half: int) -> np.ndarray:
    return np.concatenate([np.ones(half), np.zeros(half)])


def _drift_gap_summands(drift: Callable, xt, t, x0, epsilon: float) -> np.ndarray:
    n = xt.shape[0]
    both = drift(np.vstack([xt, xt]), np.concatenate([t, t]), np.vstack([x0, x0]), _flags(n))
    gap = both[:n] - both[n:]
    return (gap * gap).sum(axis=1) / (2.0 * epsilon)


def _summarise(summands: np.ndarray, groups: np.ndarray, t: np.ndarray, bridge: BridgeConfig) -> tuple[float, float, float]:
    """Mean, cluster-robust standard error (clusters = source pairs) and the t-truncation bound."""
    n = summands.size
    mean = float(summands.mean())
    sums = np.bincount(groups, weights=summands)
    counts = np.bincount(groups)
    used = counts > 0
    g = int(used.sum())
    if g > 1:
        resid = sums[used] - counts[used] * mean
        se = math.sqrt(g / (g - 1) * float((resid * resid).sum())) / n
    else:
        se = 0.0
    width = bridge.t_max - bridge.t_min
    hi = t >= bridge.t_max - _EDGE_FRACTION * width
    lo = t <= bridge.t_min + _EDGE_FRACTION * width
    hi_mean = float(summands[hi].mean()) if hi.any() else mean
    lo_mean = float(summands[lo].mean()) if lo.any() else mean
    bound = (1.0 - bridge.t_max) * hi_mean + bridge.t_min * lo_mean
    return mean, se, bound


def _evaluate_chunks(chunk: Callable, total: int, rng: Rng, workers: int) -> tuple[np.ndarray, np.ndarray]:
    """Run ``chunk(lo, hi, stream)`` over fixed tuple ranges, stream ``c`` for chunk ``c``."""
    bounds = [(lo, min(lo + _EVAL_CHUNK, total)) for lo in range(0, total, _EVAL_CHUNK)]
    jobs = [(lo, hi, rng.split(c)) for c, (lo, hi) in enumerate(bounds)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: chunk(*job), jobs))
    else:
        parts = [chunk(*job) for job in jobs]
    if not parts:
        return np.empty(0), np.empty(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _tuple_count(cfg: EstimatorConfig, n_pairs: int) -> int:
    return cfg.eval_tuples if cfg.eval_tuples is not None else cfg.resample * n_pairs


# ---------------------------------------------------------------------------
# mutual information
# ---------------------------------------------------------------------------


def train_infobridge(
    x0,
    x1,
    cfg: EstimatorConfig,
    callback: Callable[[TrainStepRecord], None] | None = None,
) -> tuple[DriftNet, list[TrainStepRecord]]:
    """Train the flag-conditioned drift net on pairs ``(x0[i], x1[i])``.

    Each step draws a batch with replacement, permutes ``x1`` within the batch
    for the independent coupling, samples shared times and independent bridge
    points for both couplings, and takes one Adam step on the summed losses.
    Inputs are used as given (standardize beforehand if desired); sides of
    unequal dimension are zero-padded.
    """
    x0, x1 = _as_pairs(x0, x1)
    n, d = x0.shape
    if n < 2:
        raise InsufficientSamples("training needs at least 2 pairs")
    root = Rng(cfg.seed)
    net = DriftNet(_resolve_net(cfg, d), rng=root.split(0))
    rng = root.split(1)
    B = cfg.batch_size
    s = _flags(B)
    history: list[TrainStepRecord] = []
    for step in range(1, cfg.train_steps + 1):
        idx = rng.integers(0, n, B)
        batch = make_training_batch(x0[idx], x1[idx], cfg.bridge, rng)
        rec = _flag_step(
            net,
            np.vstack([batch.xt, batch.xt_perm]),
            np.concatenate([batch.t, batch.t]),
            np.vstack([batch.x0, batch.x0]),
            np.vstack([batch.target, batch.target_perm]),
            s,
            cfg,
            step,
        )
        history.append(rec)
        if callback is not None:
            callback(rec)
    return net, history


def estimate_mi(
    drift, x0, x1, cfg: EstimatorConfig, rng: Rng | int | None = None, workers: int = 1
) -> EstimateReport:
    """Monte-Carlo estimate of the integrated squared drift gap over evaluation pairs.

    ``drift`` is a trained :class:`DriftNet` (EMA weights are used) or any
    callable ``v(xt, t, x0, s)``, e.g. the analytic Gaussian drifts. Chunks of
    tuples draw from their own RNG streams, so ``workers`` changes wall time only.
    """
    start = time.perf_counter()
    x0, x1 = _as_pairs(x0, x1)
    n = x0.shape[0]
    rng = as_rng(Rng(cfg.seed).split(2) if rng is None else rng)
    total = _tuple_count(cfg, n)
    pair_idx = np.arange(total) % n

    def chunk(lo: int, hi: int, sub: Rng) -> tuple[np.ndarray, np.ndarray]:
        a, b = x0[pair_idx[lo:hi]], x1[pair_idx[lo:hi]]
        t = sample_time(cfg.bridge, sub, hi - lo)
        xt = sample_bridge_point(a, b, t, cfg.bridge, sub)
        return _drift_gap_summands(drift, xt, t, a, cfg.epsilon), t

    summands, times = _evaluate_chunks(chunk, total, rng, workers)
    mean, se, bound = _summarise(summands, pair_idx, times, cfg.bridge)
    return EstimateReport(
        estimate=mean,
        std_error=se,
        n_tuples=total,
        config_fingerprint=cfg.fingerprint(),
        wall_time=time.perf_counter() - start,
        truncation_bound=bound,
        epsilon=cfg.epsilon,
        seed=cfg.seed,
        train_steps=int(getattr(drift, "step_count", 0)),
    )


@dataclass
class FittedMI:
    """Result of :func:`run_infobridge`: report plus everything needed to reuse the model."""

    report: EstimateReport
    net: DriftNet
    affine: AffineRecord | None
    history: list[TrainStepRecord]


def run_infobridge(train: tuple, test: tuple, cfg: EstimatorConfig, task: str = "") -> FittedMI:
    """Standardize on the training split, train, and estimate MI on the test split."""
    start = time.perf_counter()
    tr0, tr1 = (np.asarray(a, dtype=np.float64).reshape(len(a), -1) for a in train)
    te0, te1 = (np.asarray(a, dtype=np.float64).reshape(len(a), -1) for a in test)
    affine = None
    if cfg.standardize:
        tr0, tr1, affine = standardize(tr0, tr1)
        te0, te1 = affine.apply(te0, te1)
    net, history = train_infobridge(tr0, tr1, cfg)
    report = estimate_mi(net, te0, te1, cfg)
    report.task = task
    report.train_steps = cfg.train_steps
    report.wall_time = time.perf_counter() - start
    return FittedMI(report, net, affine, history)


# ---------------------------------------------------------------------------
# KL divergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReferenceSpec:
    """Start-point law ``p(x0)`` of the KL bridges.

    ``standard-normal``, ``scaled-normal`` (isotropic ``variance``) or
    ``data-gaussian`` (diagonal Gaussian with ``mean`` / ``std`` from data).
    """

    kind: str = "standard-normal"
    dim: int = 1
    variance: float = 1.0
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("standard-normal", "scaled-normal", "data-gaussian"):
            raise ConfigError(f"unknown reference kind {self.kind!r}", "reference.kind")
        if not self.variance > 0:
            raise ConfigError("reference variance must be positive", "reference.variance")
        if self.kind == "data-gaussian" and (self.mean is None or self.std is None):
            raise ConfigError("data-gaussian reference needs mean and std", "reference")

    @classmethod
    def from_data(cls, samples: np.ndarray) -> "ReferenceSpec":
        samples = np.asarray(samples, dtype=np.float64).reshape(len(samples), -1)
        return cls("data-gaussian", samples.shape[1], mean=samples.mean(axis=0), std=samples.std(axis=0))

    def sample(self, n: int, rng: Rng) -> np.ndarray:
        z = rng.normal((n, self.dim))
        if self.kind == "standard-normal":
            return z
        if self.kind == "scaled-normal":
            return z * math.sqrt(self.variance)
        return self.mean + self.std * z

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "variance": self.variance}
        if self.kind == "data-gaussian":
            out.update(mean=np.asarray(self.mean).tolist(), std=np.asarray(self.std).tolist())
        return out


def _draw(pool, idx_rng: Rng, n: int) -> np.ndarray:
    if callable(pool):
        return np.asarray(pool(n, idx_rng), dtype=np.float64).reshape(n, -1)
    return pool[idx_rng.integers(0, pool.shape[0], n)]


def _pool_dim(pool, rng: Rng) -> int:
    return _draw(pool, rng, 1).shape[1] if callable(pool) else pool.shape[1]


def train_kl_bridges(
    samples_p1,
    samples_p2,
    ref: ReferenceSpec,
    cfg: EstimatorConfig,
    callback: Callable[[TrainStepRecord], None] | None = None,
) -> tuple[DriftNet, list[TrainStepRecord]]:
    """Learn the drifts of the bridge mixtures from ``ref`` to ``p1`` (flag 1) and to ``p2`` (flag 0).

    Either sample pool may be an array of samples or a sampler
    ``f(n, rng) -> (n, d)`` for distributions that can be drawn fresh.
    """
    if not callable(samples_p1):
        samples_p1 = np.asarray(samples_p1, dtype=np.float64)
        samples_p1 = samples_p1.reshape(len(samples_p1), -1)
    if not callable(samples_p2):
        samples_p2 = np.asarray(samples_p2, dtype=np.float64)
        samples_p2 = samples_p2.reshape(len(samples_p2), -1)
    root = Rng(cfg.seed)
    rng = root.split(1)
    d1, d2 = _pool_dim(samples_p1, root.split(9)), _pool_dim(samples_p2, root.split(9))
    if d1 != d2 or ref.dim != d1:
        raise DimensionMismatch(f"dimensions differ: p1 {d1}, p2 {d2}, reference {ref.dim}")
    net = DriftNet(_resolve_net(cfg, d1), rng=root.split(0))
    B = cfg.batch_size
    s = _flags(B)
    history: list[TrainStepRecord] = []
    for step in range(1, cfg.train_steps + 1):
        x0 = ref.sample(B, rng)
        xa = _draw(samples_p1, rng, B)
        xb = _draw(samples_p2, rng, B)
        t = sample_time(cfg.bridge, rng, B)
        xta = sample_bridge_point(x0, xa, t, cfg.bridge, rng)
        xtb = sample_bridge_point(x0, xb, t, cfg.bridge, rng)
        rec = _flag_step(
            net,
            np.vstack([xta, xtb]),
            np.concatenate([t, t]),
            np.vstack([x0, x0]),
            np.vstack([bridge_target(xa, xta, t), bridge_target(xb, xtb, t)]),
            s,
            cfg,
            step,
        )
        history.append(rec)
        if callback is not None:
            callback(rec)
    return net, history


def estimate_kl(
    drift, samples_p1, ref: ReferenceSpec, cfg: EstimatorConfig, rng: Rng | int | None = None, workers: int = 1
) -> EstimateReport:
    """KL(p1 || p2) from the flag-1 / flag-0 drift gap along bridges from ``ref`` to ``p1``."""
    start = time.perf_counter()
    x1 = np.asarray(samples_p1, dtype=np.float64)
    x1 = x1.reshape(len(x1), -1)
    n = x1.shape[0]
    if ref.dim != x1.shape[1]:
        raise DimensionMismatch(f"reference dimension {ref.dim} differs from data dimension {x1.shape[1]}")
    rng = as_rng(Rng(cfg.seed).split(2) if rng is None else rng)
    total = _tuple_count(cfg, n)
    pair_idx = np.arange(total) % n

    def chunk(lo: int, hi: int, sub: Rng) -> tuple[np.ndarray, np.ndarray]:
        b = x1[pair_idx[lo:hi]]
        a = ref.sample(hi - lo, sub)
        t = sample_time(cfg.bridge, sub, hi - lo)
        xt = sample_bridge_point(a, b, t, cfg.bridge, sub)
        return _drift_gap_summands(drift, xt, t, a, cfg.epsilon), t

    summands, times = _evaluate_chunks(chunk, total, rng, workers)
    mean, se, bound = _summarise(summands, pair_idx, times, cfg.bridge)
    return EstimateReport(
        estimate=mean,
        std_error=se,
        n_tuples=total,
        config_fingerprint=fingerprint({"cfg": cfg.to_dict(), "ref": ref.to_dict()}),
        wall_time=time.perf_counter() - start,
        truncation_bound=bound,
        method="kl",
        epsilon=cfg.epsilon,
        seed=cfg.seed,
        train_steps=int(getattr(drift, "step_count", 0)),
    )


def _split(samples: np.ndarray, eval_samples, frac: float = 0.8) -> tuple[np.ndarray, np.ndarray]:
    if eval_samples is not None:
        return samples, np.asarray(eval_samples, dtype=np.float64).reshape(len(eval_samples), -1)
    cut = int(round(frac * samples.shape[0]))
    return samples[:cut], samples[cut:]


def run_kl(
    samples_p1,
    samples_p2,
    cfg: EstimatorConfig,
    ref: ReferenceSpec | str | None = None,
    eval_samples=None,
    affine: tuple[np.ndarray, np.ndarray] | None = None,
) -> EstimateReport:
    """Train KL bridges and estimate KL(p1 || p2).

    Both pools are mapped by the same per-dimension affine map (fitted on the
    ``p1`` training split unless ``affine=(shift, scale)`` is given), which
    leaves the KL divergence unchanged. ``eval_samples`` defaults to the last
    20% of ``samples_p1``. ``ref`` may be a reference kind name; for
    ``data-gaussian`` it is fitted to the mapped ``p1`` training split.
    """
    start = time.perf_counter()
    p1 = np.asarray(samples_p1, dtype=np.float64)
    p1 = p1.reshape(len(p1), -1)
    train1, eval1 = _split(p1, eval_samples)
    if affine is None:
        if cfg.standardize:
            shift, scale = train1.mean(axis=0), train1.std(axis=0)
            if not np.all(scale > 0):
                raise SingularCovariance("a dimension of the p1 samples is constant")
        else:
            shift, scale = np.zeros(p1.shape[1]), np.ones(p1.shape[1])
    else:
        shift, scale = (np.asarray(v, dtype=np.float64) for v in affine)

    def mapped(pool):
        if callable(pool):
            return lambda n, r: (np.asarray(pool(n, r)).reshape(n, -1) - shift) / scale
        pool = np.asarray(pool, dtype=np.float64)
        return (pool.reshape(len(pool), -1) - shift) / scale

    train1, eval1 = mapped(train1), mapped(eval1)
    if isinstance(ref, str):
        ref = ReferenceSpec.from_data(train1) if ref == "data-gaussian" else ReferenceSpec(ref, p1.shape[1])
    ref = ref or ReferenceSpec("standard-normal", p1.shape[1])
    net, _ = train_kl_bridges(train1, mapped(samples_p2), ref, cfg)
    report = estimate_kl(net, eval1, ref, cfg)
    report.train_steps = cfg.train_steps
    report.wall_time = time.perf_counter() - start
    return report


# ---------------------------------------------------------------------------
# entropy via maximum-entropy reference laws
# ---------------------------------------------------------------------------


def estimate_entropy_gaussian(
    samples,
    ref: ReferenceSpec | None,
    cfg: EstimatorConfig,
    eval_samples=None,
    ridge: float = 1e-8,
) -> EstimateReport:
    """``H(p) = H(N(m, S)) - KL(p || N(m, S))`` with ``m, S`` fitted to the samples."""
    x = np.asarray(samples, dtype=np.float64)
    x = x.reshape(len(x), -1)
    n, d = x.shape
    if n < d + 1:
        raise InsufficientSamples(f"need at least {d + 1} samples to fit a {d}-dim covariance, got {n}")
    mean, cov = running_stats_finalize(RunningStats(d, full=True).update(x))
    cov = cov + ridge * np.eye(d)
    try:
        L = cholesky(cov)
    except NotPositiveDefinite as exc:
        raise SingularCovariance("sample covariance is singular even after the ridge") from exc
    h_gauss = 0.5 * (d * math.log(2 * math.pi * math.e) + logdet_spd(cov))

    def gaussian_pool(m: int, r: Rng) -> np.ndarray:
        return mean + r.normal((m, d)) @ L.T

    scale = np.sqrt(np.diag(cov))
    kl = run_kl(x, gaussian_pool, cfg, ref=ref, eval_samples=eval_samples, affine=(mean, scale))
    kl.estimate, kl.method = h_gauss - kl.estimate, "entropy-gaussian"
    return kl


def estimate_entropy_uniform(
    samples,
    support_box,
    ref: ReferenceSpec | None,
    cfg: EstimatorConfig,
    eval_samples=None,
) -> EstimateReport:
    """``H(p) = log vol(box) - KL(p || U(box))``."""
    x = np.asarray(samples, dtype=np.float64)
    x = x.reshape(len(x), -1)
    box = np.asarray(support_box, dtype=np.float64).reshape(-1, 2)
    if box.shape[0] != x.shape[1]:
        raise DimensionMismatch(f"box has {box.shape[0]} dimensions, samples have {x.shape[1]}")
    lo, hi = box[:, 0], box[:, 1]
    if not np.all(hi > lo):
        raise ConfigError("support box needs hi > lo in every dimension", "support_box")
    for arr in (x,) if eval_samples is None else (x, np.asarray(eval_samples).reshape(len(eval_samples), -1)):
        outside = np.flatnonzero(((arr < lo) | (arr > hi)).any(axis=1))
        if outside.size:
            raise SampleOutsideSupport(f"sample {int(outside[0])} lies outside the support box")
    h_unif = float(np.log(hi - lo).sum())

    def uniform_pool(m: int, r: Rng) -> np.ndarray:
        return lo + (hi - lo) * r.uniform(0.0, 1.0, (m, lo.size))

    shift, scale = 0.5 * (lo + hi), (hi - lo) / math.sqrt(12.0)
    kl = run_kl(x, uniform_pool, cfg, ref=ref, eval_samples=eval_samples, affine=(shift, scale))
    kl.estimate, kl.method = h_unif - kl.estimate, "entropy-uniform"
    return kl
