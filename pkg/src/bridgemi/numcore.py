"""Dense linear algebra, random streams and running moment statistics.

Matrices are plain ``float64`` numpy arrays in row-major (C) order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InsufficientSamples, NotPositiveDefinite


class Rng:
    """Counter-based random stream (Philox) that can be split by index.

    Two ``Rng`` objects built from the same seed and the same split path
    produce identical draws, independent of the order in which sibling
    streams are consumed.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.key = tuple(_key)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def split(self, index: int) -> "Rng":
        return Rng(self.seed, self.key + (int(index),))

    def normal(self, size) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.gen.uniform(low, high, size)

    def integers(self, low, high, size) -> np.ndarray:
        return self.gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"


def as_rng(rng: "Rng | int") -> Rng:
    return rng if isinstance(rng, Rng) else Rng(rng)


def sample_standard_normal(rng: Rng, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.normal(n)


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular factor ``L`` with ``L @ L.T == a``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.abs(a).max(), 1e-300)
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    L, pivot = _kernels.cholesky_lower(a)
    if pivot >= 0:
        raise NotPositiveDefinite(pivot)
    return L


def logdet_spd(a: np.ndarray) -> float:
    L = cholesky(a)
    return 2.0 * float(np.log(np.diag(L)).sum())


@dataclass
class RunningStats:
    """Single-pass mean and (co)variance accumulator (Welford / Chan merge).

    With ``full=True`` the full covariance is accumulated; otherwise only
    per-dimension variances.
    """

    dim: int
    full: bool = True
    n: int = 0
    mean: np.ndarray = field(default=None)
    m2: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mean is None:
            self.mean = np.zeros(self.dim)
        if self.m2 is None:
            self.m2 = np.zeros((self.dim, self.dim) if self.full else self.dim)

    def update(self, batch: np.ndarray) -> "RunningStats":
        batch = np.asarray(batch, dtype=np.float64).reshape(-1, self.dim)
        if batch.shape[0] == 0:
            return self
        other = RunningStats(self.dim, self.full)
        other.n = batch.shape[0]
        other.mean = batch.mean(axis=0)
        dev = batch - other.mean
        other.m2 = dev.T @ dev if self.full else (dev * dev).sum(axis=0)
        merged = self.merge(other)
        self.n, self.mean, self.m2 = merged.n, merged.mean, merged.m2
        return self

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.dim != self.dim or other.full != self.full:
            raise ValueError("cannot merge statistics of different layout")
        n = self.n + other.n
        out = RunningStats(self.dim, self.full)
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.n = n
        out.mean = self.mean + delta * (other.n / n)
        corr = np.outer(delta, delta) if self.full else delta * delta
        out.m2 = self.m2 + other.m2 + corr * (self.n * other.n / n)
        return out


def running_stats_finalize(stats: RunningStats) -> tuple[np.ndarray, np.ndarray]:
    """Unbiased mean and covariance.

    Returns the full covariance matrix, or a diagonal matrix of variances when
    the accumulator tracks variances only.
    """
    if stats.n < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {stats.n}")
    cov = stats.m2 / (stats.n - 1)
    if not stats.full:
        cov = np.diag(cov)
    return stats.mean.copy(), cov
