"""Ground truth that needs no neural training.

* closed-form bridge drifts for Gaussian endpoint laws (joint and independent
  couplings), obtained by Gaussian conjugacy;
* the analytic Gaussian MI;
* tensor-grid quadrature MI for one-dimensional pairs with known density;
* the Kraskov-Stoegbauer-Grassberger k-NN estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from . import _kernels
from .errors import NoClosedDensity, NotPositiveDefinite, SingularCovariance, SingularTime, TooFewSamples
from .numcore import Rng, cholesky
from .tasks import GaussianSpec, JointTask, UniformNoiseSpec

# ---------------------------------------------------------------------------
# Gaussian bridge drifts
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GaussianDrift:
    """Exact drift of a Brownian-bridge mixture whose endpoint law is Gaussian given x0.

    The prior of the far endpoint is ``x1 | x0 ~ N(offset + gain @ x0, prior_cov)``.
    Use :meth:`from_spec` for the joint / independent couplings of a
    :class:`GaussianSpec` and :meth:`from_marginal` for an ``x1`` law that
    does not depend on ``x0`` (KL bridges from a reference).
    """

    offset: np.ndarray
    gain: np.ndarray
    prior_cov: np.ndarray
    epsilon: float

    def __post_init__(self):
        self.prior_cov = 0.5 * (self.prior_cov + self.prior_cov.T)
        lam, vec = np.linalg.eigh(self.prior_cov)
        self._lam = np.clip(lam, 0.0, None)
        self._vec = vec
        self.dim = self.prior_cov.shape[0]

    @classmethod
    def from_spec(cls, spec: GaussianSpec, coupling: str, epsilon: float) -> "GaussianDrift":
        if spec.dim0 != spec.dim1:
            raise ValueError("bridge drifts need equal dimensions; pad the GaussianSpec first")
        if coupling == "independent":
            return cls(spec.mean1.copy(), np.zeros((spec.dim1, spec.dim0)), spec.cov11.copy(), epsilon)
        if coupling != "joint":
            raise ValueError(f"unknown coupling {coupling!r}")
        try:
            L = cholesky(spec.cov00)
        except NotPositiveDefinite as exc:
            raise SingularCovariance("Sigma_00 is singular") from exc
        gain = cho_solve((L, True), spec.cov01).T  # Sigma_10 Sigma_00^{-1}
        prior_cov = spec.cov11 - gain @ spec.cov01
        offset = spec.mean1 - gain @ spec.mean0
        return cls(offset, gain, prior_cov, epsilon)

    @classmethod
    def from_marginal(cls, mean, cov, epsilon: float) -> "GaussianDrift":
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        return cls(mean.copy(), np.zeros((mean.size, mean.size)), cov.copy(), epsilon)

    def prior_mean(self, x0: np.ndarray) -> np.ndarray:
        return self.offset + x0 @ self.gain.T

    def __call__(self, xt, t, x0, s=None) -> np.ndarray:
        """Batched drift: ``xt``, ``x0`` of shape (n, d), ``t`` of shape (n,)."""
        xt = np.atleast_2d(np.asarray(xt, dtype=np.float64))
        x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        if np.any(1.0 - t < 1e-12):
            raise SingularTime("drift is undefined at t = 1")
        tt = t[:, None]
        a = self.prior_mean(x0)
        resid = xt - (1.0 - tt) * x0 - tt * a
        # Kalman gain A (tA + eps(1-t) I)^{-1} in the eigenbasis of A
        scale = self._lam / (tt * self._lam + self.epsilon * (1.0 - tt))
        post_mean = a + ((resid @ self._vec) * scale) @ self._vec.T
        return (post_mean - xt) / (1.0 - tt)

    def posterior_target_variance(self, t) -> np.ndarray:
        """``E||target - drift||^2`` given ``(x_t, x0)``, as a function of ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))[:, None]
        post = self._lam * self.epsilon * (1.0 - t) / (t * self._lam + self.epsilon * (1.0 - t))
        return post.sum(axis=1) / (1.0 - t[:, 0]) ** 2


def gaussian_posterior_drift(d: GaussianDrift, xt, t: float, x0) -> np.ndarray:
    """Single-point drift using Cholesky solves, independent of the batched eigen path."""
    if not 1.0 - t >= 1e-12:
        raise SingularTime("drift is undefined at t = 1")
    xt = np.asarray(xt, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    a = d.offset + d.gain @ x0
    A = d.prior_cov
    S = t * A + d.epsilon * (1.0 - t) * np.eye(d.dim)
    try:
        L = cholesky(0.5 * (S + S.T))
    except NotPositiveDefinite as exc:
        raise SingularCovariance("innovation covariance is singular") from exc
    m = a + A @ cho_solve((L, True), xt - (1.0 - t) * x0 - t * a)
    return (m - xt) / (1.0 - t)


def oracle_drift_pair(spec: GaussianSpec, epsilon: float) -> Callable:
    """Flag-dispatched drift ``v(xt, t, x0, s)``: joint drift where s=1, independent where s=0."""
    joint = GaussianDrift.from_spec(spec, "joint", epsilon)
    ind = GaussianDrift.from_spec(spec, "independent", epsilon)
    return FlagDrift(joint, ind)


def oracle_kl_drifts(mean1, cov1, mean2, cov2, epsilon: float) -> Callable:
    """Flag-dispatched drifts of the bridges towards N(mean1, cov1) (s=1) and N(mean2, cov2) (s=0)."""
    return FlagDrift(GaussianDrift.from_marginal(mean1, cov1, epsilon), GaussianDrift.from_marginal(mean2, cov2, epsilon))


@dataclass
class FlagDrift:
    on: Callable
    off: Callable

    def __call__(self, xt, t, x0, s) -> np.ndarray:
        s = np.broadcast_to(np.asarray(s, dtype=np.float64).reshape(-1), (np.atleast_2d(xt).shape[0],))
        out = np.empty_like(np.atleast_2d(np.asarray(xt, dtype=np.float64)))
        on = s > 0.5
        if on.any():
            out[on] = self.on(np.atleast_2d(xt)[on], np.asarray(t).reshape(-1)[on], np.atleast_2d(x0)[on])
        if (~on).any():
            out[~on] = self.off(np.atleast_2d(xt)[~on], np.asarray(t).reshape(-1)[~on], np.atleast_2d(x0)[~on])
        return out


def analytic_gaussian_mi(spec: GaussianSpec) -> float:
    """``0.5 * (log det S00 + log det S11 - log det S)`` in nats."""
    try:
        return spec.mi()
    except NotPositiveDefinite as exc:
        raise SingularCovariance("covariance block is singular") from exc


# ---------------------------------------------------------------------------
# quadrature MI for 1-d pairs
# ---------------------------------------------------------------------------


@dataclass
class Density1d:
    """Joint and marginal log-densities of a 1-d pair on an integration box.

    With ``shear=True`` the box is given in ``(x0, u = x1 - x0)`` coordinates
    (unit Jacobian), which keeps additive-noise densities free of diagonal
    discontinuities.
    """

    box: tuple[float, float, float, float]
    joint_logpdf: Callable
    logpdf0: Callable
    logpdf1: Callable
    shear: bool = False


def _gauss_density(spec: GaussianSpec) -> Density1d:
    m0, m1 = float(spec.mean0[0]), float(spec.mean1[0])
    v0, v1, c = float(spec.cov00[0, 0]), float(spec.cov11[0, 0]), float(spec.cov01[0, 0])
    det = v0 * v1 - c * c
    if not det > 0:
        raise SingularCovariance("bivariate covariance is singular")

    def joint(x, y):
        dx, dy = x - m0, y - m1
        q = (v1 * dx * dx - 2 * c * dx * dy + v0 * dy * dy) / det
        return -0.5 * q - math.log(2 * math.pi) - 0.5 * math.log(det)

    def marg(m, v):
        return lambda z: -0.5 * (z - m) ** 2 / v - 0.5 * math.log(2 * math.pi * v)

    w0, w1 = 9 * math.sqrt(v0), 9 * math.sqrt(v1)
    return Density1d((m0 - w0, m0 + w0, m1 - w1, m1 + w1), joint, marg(m0, v0), marg(m1, v1))


def _uniform_noise_density(spec: UniformNoiseSpec) -> Density1d:
    a = spec.noise_scale

    def p1(y):
        return np.clip(np.minimum(1.0, y + a) - np.maximum(0.0, y - a), 0.0, None) / (2 * a)

    return Density1d(
        (0.0, 1.0, -a, a),
        lambda x, y: np.full(np.broadcast(x, y).shape, -math.log(2 * a)),
        lambda x: np.zeros_like(x),
        lambda y: np.log(p1(y)),
        shear=True,
    )


def independent_uniform_density() -> Density1d:
    zero2 = lambda x, y: np.zeros(np.broadcast(x, y).shape)  # noqa: E731
    zero1 = lambda z: np.zeros_like(z)  # noqa: E731
    return Density1d((0.0, 1.0, 0.0, 1.0), zero2, zero1, zero1)


def density_of(task: JointTask) -> Density1d:
    """Density in the base coordinates of ``task``.

    Elementwise monotone transforms do not change MI, so transformed tasks are
    integrated in their untransformed coordinates.
    """
    if task.dim0 != 1 or task.dim1 != 1:
        raise NoClosedDensity(f"task {task.name!r} is not a 1-d pair")
    if isinstance(task.base, GaussianSpec):
        return _gauss_density(task.base)
    if isinstance(task.base, UniformNoiseSpec):
        return _uniform_noise_density(task.base)
    raise NoClosedDensity(f"task {task.name!r} has no tractable density")


def _grid_mi(dens: Density1d, panels: int, order: int = 8) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    lo0, hi0, lo1, hi1 = dens.box

    def axis(lo, hi):
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        pts = (mid[:, None] + half[:, None] * nodes).ravel()
        w = (half[:, None] * weights).ravel()
        return pts, w

    a, wa = axis(lo0, hi0)
    b, wb = axis(lo1, hi1)
    A, B = np.meshgrid(a, b, indexing="ij")
    x0, x1 = (A, A + B) if dens.shear else (A, B)
    lj = dens.joint_logpdf(x0, x1)
    integrand = np.exp(lj) * (lj - dens.logpdf0(x0) - dens.logpdf1(x1))
    integrand = np.where(np.isfinite(integrand), integrand, 0.0)
    return float(wa @ integrand @ wb)


def numeric_mi_1d(task: "JointTask | Density1d", grid: int = 16, tol: float = 1e-4, max_panels: int = 4096) -> float:
    """MI by composite Gauss-Legendre quadrature, doubling the panel count until two
    successive estimates differ by less than ``tol``."""
    dens = task if isinstance(task, Density1d) else density_of(task)
    panels = max(1, grid)
    prev = _grid_mi(dens, panels)
    while True:
        panels *= 2
        cur = _grid_mi(dens, panels)
        if abs(cur - prev) < tol:
            return cur
        if panels >= max_panels:
            raise RuntimeError(f"quadrature did not converge (last change {abs(cur - prev):.2e})")
        prev = cur


# ---------------------------------------------------------------------------
# KSG
# ---------------------------------------------------------------------------

_ASYMPTOTIC = (
    -1.0 / 12,
    1.0 / 120,
    -1.0 / 252,
    1.0 / 240,
    -1.0 / 132,
    691.0 / 32760,
    -1.0 / 12,
)


def digamma(x) -> np.ndarray:
    """Digamma for positive arguments: recurrence up to x >= 6, then the asymptotic series."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise ValueError("digamma is only implemented for positive arguments")
    x = x.copy()
    acc = np.zeros_like(x)
    small = x < 6.0
    while small.any():
        acc[small] -= 1.0 / x[small]
        x[small] += 1.0
        small = x < 6.0
    inv2 = 1.0 / (x * x)
    series = np.zeros_like(x)
    for c in reversed(_ASYMPTOTIC):
        series = (series + c) * inv2
    return acc + np.log(x) - 0.5 / x + series


@dataclass(frozen=True)
class KsgConfig:
    k: int = 1
    metric: str = "max-norm"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.metric != "max-norm":
            raise ValueError("only the max-norm metric is supported")


def _has_duplicates(z: np.ndarray) -> bool:
    return np.unique(z, axis=0).shape[0] < z.shape[0]


def ksg_mi(x, y, cfg: KsgConfig = KsgConfig(), rng: Rng | None = None) -> float:
    """Kraskov estimator #1 with max-norm neighbourhoods (brute-force search)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x = x.reshape(len(x), -1)
    y = y.reshape(len(y), -1)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y must have the same number of samples")
    if n < cfg.k + 2:
        raise TooFewSamples(f"KSG with k={cfg.k} needs at least {cfg.k + 2} samples, got {n}")
    rng = rng or Rng(0)
    if _has_duplicates(x):
        x = x + 1e-10 * rng.normal(x.shape)
    if _has_duplicates(y):
        y = y + 1e-10 * rng.normal(y.shape)
    nx, ny = _kernels.ksg_counts(x, y, cfg.k)
    return float(digamma(cfg.k) + digamma(n) - np.mean(digamma(nx + 1.0) + digamma(ny + 1.0)))
