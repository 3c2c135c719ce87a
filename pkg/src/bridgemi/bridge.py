"""Brownian-bridge sampling, regression targets and training batches."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NonFiniteState, SingularTime
from .numcore import Rng

_T_EPS = 1e-12


@dataclass(frozen=True)
class BridgeConfig:
    """Volatility ``epsilon`` of ``dx = sqrt(epsilon) dW`` and the sampled time range.

    ``t_max`` stays strictly below 1: the target ``(x1 - xt) / (1 - t)`` has
    variance ``epsilon * t / (1 - t)``.
    """

    epsilon: float = 1.0
    t_min: float = 0.0
    t_max: float = 1.0 - 1e-3

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive", "bridge.epsilon")
        if not (0.0 <= self.t_min < self.t_max < 1.0):
            raise ConfigError("need 0 <= t_min < t_max < 1", "bridge.t_max")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BridgeBatch:
    x0: np.ndarray
    x1: np.ndarray
    x1_perm: np.ndarray
    t: np.ndarray
    xt: np.ndarray
    xt_perm: np.ndarray
    target: np.ndarray
    target_perm: np.ndarray
    perm: np.ndarray


def sample_bridge_point(x0, x1, t, cfg: BridgeConfig, rng: Rng) -> np.ndarray:
    """Draw ``x_t`` from the bridge pinned at ``x0`` (t=0) and ``x1`` (t=1).

    Works on single vectors (scalar ``t``) or batches (``t`` of shape (n,)).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    tt = t[..., None] if (t.ndim == 1 and x0.ndim == 2) else t
    mean = (1.0 - tt) * x0 + tt * x1
    std = np.sqrt(cfg.epsilon * tt * (1.0 - tt))
    return mean + std * rng.normal(mean.shape)


def bridge_target(x1, xt, t) -> np.ndarray:
    """Velocity target ``(x1 - xt) / (1 - t)``."""
    x1 = np.asarray(x1, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    gap = 1.0 - t
    if np.any(gap < _T_EPS):
        raise SingularTime("bridge target is singular at t = 1")
    if gap.ndim == 1 and xt.ndim == 2:
        gap = gap[:, None]
    return (x1 - xt) / gap


def sample_time(cfg: BridgeConfig, rng: Rng, n: int) -> np.ndarray:
    return rng.uniform(cfg.t_min, cfg.t_max, n)


def make_training_batch(
    x0: np.ndarray,
    x1: np.ndarray,
    cfg: BridgeConfig,
    rng: Rng,
    perm: np.ndarray | None = None,
) -> BridgeBatch:
    """Paired and permuted bridge samples sharing one time vector.

    The permuted stream pairs ``x0[i]`` with ``x1[perm[i]]`` for a uniform
    random permutation (fixed points allowed); the two streams use
    independent bridge noise.
    """
    n = x0.shape[0]
    if n < 2:
        raise ValueError("a training batch needs at least 2 pairs")
    if perm is None:
        perm = rng.permutation(n)
    x1_perm = x1[perm]
    t = sample_time(cfg, rng, n)
    xt = sample_bridge_point(x0, x1, t, cfg, rng)
    xt_perm = sample_bridge_point(x0, x1_perm, t, cfg, rng)
    return BridgeBatch(
        x0=x0,
        x1=x1,
        x1_perm=x1_perm,
        t=t,
        xt=xt,
        xt_perm=xt_perm,
        target=bridge_target(x1, xt, t),
        target_perm=bridge_target(x1_perm, xt_perm, t),
        perm=perm,
    )


def simulate_sde(
    drift: Callable,
    x0,
    s,
    cfg: BridgeConfig,
    steps: int,
    rng: Rng,
) -> np.ndarray:
    """Euler-Maruyama for ``dx = v(x, t, x0, s) dt + sqrt(eps) dW`` on ``[0, t_max]``.

    ``drift`` takes batched arguments ``(xt (n,d), t (n,), x0 (n,d), s (n,))``.
    ``x0`` may be a single vector or a batch of start points; the terminal
    state has the same shape.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.asarray(x0, dtype=np.float64)
    single = x0.ndim == 1
    start = np.atleast_2d(x0)
    n = start.shape[0]
    flags = np.broadcast_to(np.asarray(s, dtype=np.float64), (n,)).copy()
    x = start.copy()
    dt = cfg.t_max / steps
    sq = np.sqrt(cfg.epsilon * dt)
    for k in range(steps):
        t = np.full(n, k * dt)
        x = x + drift(x, t, start, flags) * dt + sq * rng.normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"trajectory left the finite range at step {k + 1}")
    return x[0] if single else x
