"""Benchmark joint distributions with known mutual information.

Covers the Gaussian families of the low-dimensional benchmark (bivariate,
two-pair, dense), the high-MI correlated Gaussian, additive uniform noise,
and the elementwise transforms (half-cube, asinh, normal CDF) that leave MI
unchanged. Single-variable distributions used by the entropy and KL tools
live here too.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import (
    ConfigError,
    DataError,
    InfeasibleTarget,
    LengthMismatch,
    ParseError,
    TargetTooSmall,
    ZeroVariance,
)
from .numcore import Rng, cholesky, logdet_spd

TRANSFORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "identity": lambda x: x,
    "half-cube": lambda x: x * np.sqrt(np.abs(x)),
    "asinh": np.arcsinh,
    "normal-cdf": ndtr,
}

STRUCTURES = ("bivariate", "two-pair", "dense", "paired", "random")

_RHO_MAX = 1.0 - 1e-12


@dataclass(frozen=True, eq=False)
class GaussianSpec:
    """Jointly Gaussian pair ``(X0, X1)`` with ``X0`` in R^dim0, ``X1`` in R^dim1."""

    dim0: int
    dim1: int
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        d = self.dim0 + self.dim1
        mean = np.asarray(self.mean, dtype=np.float64).reshape(d)
        cov = np.asarray(self.cov, dtype=np.float64).reshape(d, d)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.dim0 + self.dim1

    @property
    def mean0(self) -> np.ndarray:
        return self.mean[: self.dim0]

    @property
    def mean1(self) -> np.ndarray:
        return self.mean[self.dim0 :]

    @property
    def cov00(self) -> np.ndarray:
        return self.cov[: self.dim0, : self.dim0]

    @property
    def cov01(self) -> np.ndarray:
        return self.cov[: self.dim0, self.dim0 :]

    @property
    def cov11(self) -> np.ndarray:
        return self.cov[self.dim0 :, self.dim0 :]

    def mi(self) -> float:
        return 0.5 * (logdet_spd(self.cov00) + logdet_spd(self.cov11) - logdet_spd(self.cov))


@dataclass(frozen=True)
class UniformNoiseSpec:
    """``X0 ~ U(0, 1)``, ``X1 = X0 + N`` with ``N ~ U(-noise_scale, noise_scale)``."""

    noise_scale: float

    def __post_init__(self):
        if not self.noise_scale > 0:
            raise ConfigError("noise_scale must be positive", "noise_scale")

    dim0 = 1
    dim1 = 1

    def mi(self) -> float:
        a = self.noise_scale
        if a <= 0.5:
            return a - math.log(2.0 * a)
        return 1.0 / (4.0 * a)


@dataclass(frozen=True)
class JointTask:
    name: str
    base: GaussianSpec | UniformNoiseSpec
    transform0: str = "identity"
    transform1: str = "identity"
    ground_truth_mi: float | None = None

    def __post_init__(self):
        for tag in (self.transform0, self.transform1):
            if tag not in TRANSFORMS:
                raise ConfigError(f"unknown transform {tag!r}", "transform")

    @property
    def dim0(self) -> int:
        return self.base.dim0

    @property
    def dim1(self) -> int:
        return self.base.dim1

    def with_transform(self, tag: str, name: str | None = None) -> "JointTask":
        """Same base distribution with ``tag`` applied to both sides; MI is unchanged."""
        return JointTask(
            name=name or f"{tag}@{self.name}",
            base=self.base,
            transform0=tag,
            transform1=tag,
            ground_truth_mi=self.ground_truth_mi,
        )


def _structured_cov(dim: int, structure: str, rho: float, cross: np.ndarray | None = None) -> np.ndarray:
    d = 2 * dim
    if structure == "dense":
        cov = np.full((d, d), rho)
        np.fill_diagonal(cov, 1.0)
        return cov
    cov = np.eye(d)
    if structure == "random":
        cov[:dim, dim:] = rho * cross
        cov[dim:, :dim] = rho * cross.T
        return cov
    if structure == "bivariate":
        n_pairs = 1
    elif structure == "two-pair":
        n_pairs = 2
    else:  # paired
        n_pairs = dim
    for i in range(n_pairs):
        cov[i, dim + i] = cov[dim + i, i] = rho
    return cov


def _default_rho(structure: str) -> float:
    # benchmark conventions: two-pair GT 1.02 <=> rho 0.8 per pair, dense GT 0.29 (2x2) <=> rho 0.5
    return {"bivariate": 0.75, "two-pair": 0.8, "dense": 0.5, "paired": 0.8, "random": 0.5}[structure]


def make_correlated_gaussian(
    dim: int,
    structure: str = "bivariate",
    target_mi: float | None = None,
    rho: float | None = None,
    rng: Rng | None = None,
    name: str | None = None,
) -> JointTask:
    """Build a correlated Gaussian benchmark task.

    Parameters
    ----------
    dim : int
        Dimension of each side.
    structure : str
        ``bivariate`` (dim 1), ``two-pair`` (two coordinate pairs correlated),
        ``dense`` (equicorrelation over all coordinates), ``paired`` (every
        coordinate pair correlated) or ``random`` (random cross-block
        correlation of unit spectral norm, needs ``rng``).
    target_mi : float, optional
        When given, the correlation level is solved so the analytic MI hits it.
    rho : float, optional
        Correlation level; ignored when ``target_mi`` is given.
    """
    if structure not in STRUCTURES:
        raise ConfigError(f"unknown structure {structure!r}", "structure")
    if dim < 1:
        raise ConfigError("dim must be >= 1", "dim")
    if structure == "bivariate" and dim != 1:
        raise ConfigError("bivariate structure requires dim == 1", "dim")
    if structure == "two-pair" and dim < 2:
        raise ConfigError("two-pair structure requires dim >= 2", "dim")

    cross = None
    if structure == "random":
        if rng is None:
            raise ConfigError("random structure requires an rng", "rng")
        cross = rng.normal((dim, dim))
        cross /= np.linalg.norm(cross, 2)

    def mi_at(r: float) -> float:
        return GaussianSpec(dim, dim, np.zeros(2 * dim), _structured_cov(dim, structure, r, cross)).mi()

    if target_mi is not None:
        if target_mi < 0:
            raise InfeasibleTarget("target MI must be non-negative", "target_mi")
        if target_mi == 0:
            rho = 0.0
        else:
            top = mi_at(_RHO_MAX)
            if target_mi > top:
                raise InfeasibleTarget(
                    f"target {target_mi} nats exceeds the {structure} maximum {top:.3f} nats", "target_mi"
                )
            rho = brentq(lambda r: mi_at(r) - target_mi, 0.0, _RHO_MAX, xtol=1e-15, maxiter=500)
    elif rho is None:
        rho = _default_rho(structure)
    if not abs(rho) < 1:
        raise ConfigError("correlation must satisfy |rho| < 1", "rho")

    cov = _structured_cov(dim, structure, rho, cross)
    spec = GaussianSpec(dim, dim, np.zeros(2 * dim), cov)
    try:
        gt = spec.mi()
    except Exception as exc:
        raise ConfigError(f"covariance is not positive definite for rho={rho}", "rho") from exc
    return JointTask(name=name or f"{structure}-{dim}x{dim}", base=spec, ground_truth_mi=gt)


def make_uniform_noise(noise_scale: float, name: str | None = None) -> JointTask:
    spec = UniformNoiseSpec(noise_scale)
    return JointTask(name=name or f"uniform-noise-{noise_scale:g}", base=spec, ground_truth_mi=spec.mi())


def sample_base(base, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(base, GaussianSpec):
        L = cholesky(base.cov)
        z = rng.normal((n, base.dim)) @ L.T + base.mean
        return z[:, : base.dim0].copy(), z[:, base.dim0 :].copy()
    if isinstance(base, UniformNoiseSpec):
        x0 = rng.uniform(0.0, 1.0, (n, 1))
        x1 = x0 + rng.uniform(-base.noise_scale, base.noise_scale, (n, 1))
        return x0, x1
    raise TypeError(f"unsupported base distribution {type(base).__name__}")


def sample_pairs(task: JointTask, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` i.i.d. pairs; returns arrays of shape (n, dim0) and (n, dim1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0, x1 = sample_base(task.base, n, rng)
    return TRANSFORMS[task.transform0](x0), TRANSFORMS[task.transform1](x1)


@dataclass(frozen=True, eq=False)
class AffineRecord:
    """Per-dimension ``(x - shift) / scale`` maps for both sides."""

    shift0: np.ndarray
    scale0: np.ndarray
    shift1: np.ndarray
    scale1: np.ndarray

    def apply(self, x0: np.ndarray, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (x0 - self.shift0) / self.scale0, (x1 - self.shift1) / self.scale1

    def is_identity(self, tol: float = 1e-12) -> bool:
        return all(
            np.allclose(v, ref, atol=tol, rtol=0)
            for v, ref in ((self.shift0, 0), (self.scale0, 1), (self.shift1, 0), (self.scale1, 1))
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("shift0", "scale0", "shift1", "scale1")}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineRecord":
        return cls(**{k: np.asarray(d[k], dtype=np.float64) for k in ("shift0", "scale0", "shift1", "scale1")})


def _side_affine(x: np.ndarray, side: str) -> tuple[np.ndarray, np.ndarray]:
    if x.shape[0] < 2:
        raise DataError(f"standardize needs at least 2 samples on side {side}")
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        raise ZeroVariance(f"side {side}: dimension {int(bad[0])} is constant")
    return shift, scale


def standardize(x0: np.ndarray, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray, AffineRecord]:
    """Zero-mean, unit-variance scaling per dimension, fitted on the given split."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    s0, c0 = _side_affine(x0, "x0")
    s1, c1 = _side_affine(x1, "x1")
    rec = AffineRecord(s0, c0, s1, c1)
    y0, y1 = rec.apply(x0, x1)
    return y0, y1, rec


def pad_to_common_dim(x: np.ndarray, d_target: int) -> np.ndarray:
    """Zero-pad the trailing axis of ``x`` up to ``d_target`` entries."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    if d > d_target:
        raise TargetTooSmall(f"cannot pad dimension {d} down to {d_target}")
    if d == d_target:
        return x
    pad = [(0, 0)] * (x.ndim - 1) + [(0, d_target - d)]
    return np.pad(x, pad)


def pad_gaussian_spec(spec: GaussianSpec, d_target: int, ridge: float = 1e-8) -> GaussianSpec:
    """Embed each block in ``d_target`` dims; padded coordinates get variance ``ridge``."""
    if spec.dim0 > d_target or spec.dim1 > d_target:
        raise TargetTooSmall(f"cannot pad {spec.dim0}/{spec.dim1} down to {d_target}")
    idx = np.r_[np.arange(spec.dim0), d_target + np.arange(spec.dim1)]
    cov = np.eye(2 * d_target) * ridge
    cov[np.ix_(idx, idx)] = spec.cov
    mean = np.zeros(2 * d_target)
    mean[idx] = spec.mean
    return GaussianSpec(d_target, d_target, mean, cov)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv_matrix(path: str) -> np.ndarray:
    """Read a numeric CSV; a non-numeric first row is treated as a header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    out = np.empty((len(rows), width))
    for k, (lineno, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        for c, cell in enumerate(row):
            try:
                out[k, c] = float(cell)
            except ValueError:
                raise ParseError(path, lineno, c + 1, cell) from None
    if not np.all(np.isfinite(out)):
        raise DataError(f"{path}: non-finite values present")
    return out


def load_csv_pairs(path0: str, path1: str) -> tuple[np.ndarray, np.ndarray]:
    """Row ``i`` of ``path0`` and row ``i`` of ``path1`` form pair ``i``."""
    x0 = read_csv_matrix(path0)
    x1 = read_csv_matrix(path1)
    if x0.shape[0] != x1.shape[0]:
        raise LengthMismatch(f"{path0} has {x0.shape[0]} rows but {path1} has {x1.shape[0]}")
    return x0, x1


# ---------------------------------------------------------------------------
# single-variable distributions for entropy / KL experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Distribution:
    """A sampleable distribution on R^dim with closed-form entropy.

    ``kind`` is ``gaussian`` (params ``mean``, ``cov``), ``exponential``
    (param ``rate``, i.i.d. coordinates) or ``uniform-box`` (params ``lo``,
    ``hi``).
    """

    kind: str
    dim: int
    params: dict = field(default_factory=dict)

    def sample(self, n: int, rng: Rng) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal((n, self.dim)) @ cholesky(self.covariance()).T + self.mean_vector()
        if self.kind == "exponential":
            rate = float(self.params.get("rate", 1.0))
            return -np.log1p(-rng.uniform(0.0, 1.0, (n, self.dim))) / rate
        if self.kind == "uniform-box":
            lo, hi = self.box()
            return lo + (hi - lo) * rng.uniform(0.0, 1.0, (n, self.dim))
        raise ConfigError(f"unknown distribution kind {self.kind!r}", "kind")

    def mean_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.params.get("mean", 0.0), dtype=float), (self.dim,)).copy()

    def covariance(self) -> np.ndarray:
        cov = np.asarray(self.params.get("cov", 1.0), dtype=float)
        if cov.ndim == 0:
            return np.eye(self.dim) * float(cov)
        if cov.ndim == 1:
            return np.diag(cov)
        return cov

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.broadcast_to(np.asarray(self.params.get("lo", 0.0), dtype=float), (self.dim,))
        hi = np.broadcast_to(np.asarray(self.params.get("hi", 1.0), dtype=float), (self.dim,))
        return lo, hi

    def entropy(self) -> float:
        if self.kind == "gaussian":
            return 0.5 * (self.dim * math.log(2 * math.pi * math.e) + logdet_spd(self.covariance()))
        if self.kind == "exponential":
            return self.dim * (1.0 - math.log(float(self.params.get("rate", 1.0))))
        if self.kind == "uniform-box":
            lo, hi = self.box()
            return float(np.log(hi - lo).sum())
        raise ConfigError(f"unknown distribution kind {self.kind!r}", "kind")


def gaussian_kl(mean1, cov1, mean2, cov2) -> float:
    """KL(N(mean1, cov1) || N(mean2, cov2)) in nats."""
    mean1, mean2 = np.atleast_1d(mean1).astype(float), np.atleast_1d(mean2).astype(float)
    cov1, cov2 = np.atleast_2d(cov1).astype(float), np.atleast_2d(cov2).astype(float)
    d = mean1.size
    L2 = cholesky(cov2)
    diff = np.linalg.solve(L2, mean2 - mean1)
    tr = np.trace(np.linalg.solve(L2, np.linalg.solve(L2, cov1).T))
    return 0.5 * (tr + diff @ diff - d + logdet_spd(cov2) - logdet_spd(cov1))
