"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``BRIDGEMI_DISABLE_NUMBA`` is unset or ``0``. Both paths compute the
same quantities; ``benchmarks/bench_kernels.py`` times them against each other.
"""

from __future__ import annotations

import math
import os

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _numba_requested() -> bool:
    flag = os.environ.get("BRIDGEMI_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by BRIDGEMI_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations (always defined; used directly when numba is off and
# by the benchmark for the side-by-side comparison)
# ---------------------------------------------------------------------------


def cholesky_lower_np(a: np.ndarray) -> tuple[np.ndarray, int]:
    """Return ``(L, failed_pivot)``; ``failed_pivot`` is -1 on success."""
    try:
        return np.linalg.cholesky(a), -1
    except np.linalg.LinAlgError:
        # locate the offending pivot so both paths report the same index
        n = a.shape[0]
        for k in range(1, n + 1):
            try:
                np.linalg.cholesky(a[:k, :k])
            except np.linalg.LinAlgError:
                return np.zeros_like(a), k - 1
        return np.zeros_like(a), n - 1


def gelu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tanh-approximation GELU; also returns the tanh term for the backward pass.

    Kept on numpy in both modes: its SIMD ``tanh`` beats a scalar numba loop
    several times over (see the kernel benchmark).
    """
    u = x * x
    u *= _GELU_A
    u += 1.0
    u *= x
    u *= _GELU_C
    th = np.tanh(u)
    y = th + 1.0
    y *= x
    y *= 0.5
    return y, th


def gelu_backward(x: np.ndarray, th: np.ndarray) -> np.ndarray:
    """Derivative of GELU at ``x`` given ``th`` from :func:`gelu_forward`."""
    du = x * x
    du *= 3.0 * _GELU_A * _GELU_C
    du += _GELU_C
    sech2 = 1.0 - th * th
    sech2 *= du
    sech2 *= x
    sech2 += 1.0 + th
    sech2 *= 0.5
    return sech2


def gelu_np(x: np.ndarray) -> np.ndarray:
    return gelu_forward(x)[0]


def gelu_grad_np(x: np.ndarray) -> np.ndarray:
    return gelu_backward(x, gelu_forward(x)[1])


def adam_update_np(params, m, v, grad, lr, beta1, beta2, eps, step):
    """Bias-corrected Adam update of ``params``, ``m`` and ``v`` in place."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)


def ksg_counts_np(x: np.ndarray, y: np.ndarray, k: int, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Marginal neighbour counts for KSG estimator #1 (max-norm, brute force).

    For each point i, eps_i is the distance to its k-th neighbour in the joint
    space (max of the two max-norm distances); the counts are the numbers of
    other points strictly closer than eps_i in each marginal space.
    """
    n = x.shape[0]
    nx = np.empty(n, dtype=np.int64)
    ny = np.empty(n, dtype=np.int64)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dx = np.abs(x[lo:hi, None, :] - x[None, :, :]).max(axis=2)
        dy = np.abs(y[lo:hi, None, :] - y[None, :, :]).max(axis=2)
        dz = np.maximum(dx, dy)
        rows = np.arange(hi - lo)
        dz[rows, rows + lo] = np.inf
        eps = np.partition(dz, k - 1, axis=1)[:, k - 1]
        nx[lo:hi] = (dx < eps[:, None]).sum(axis=1) - 1
        ny[lo:hi] = (dy < eps[:, None]).sum(axis=1) - 1
    return nx, ny


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _cholesky_lower_nb(a):
        n = a.shape[0]
        L = np.zeros((n, n))
        for j in range(n):
            s = a[j, j]
            for p in range(j):
                s -= L[j, p] * L[j, p]
            if not s > 0.0:
                return L, j
            d = math.sqrt(s)
            L[j, j] = d
            for i in range(j + 1, n):
                s = a[i, j]
                for p in range(j):
                    s -= L[i, p] * L[j, p]
                L[i, j] = s / d
        return L, -1

    @njit(cache=True)
    def _gelu_nb(x):
        # scalar loop kept only for the benchmark comparison
        out = np.empty_like(x)
        flat_in = x.ravel()
        flat_out = out.ravel()
        for i in range(flat_in.size):
            v = flat_in[i]
            flat_out[i] = 0.5 * v * (1.0 + math.tanh(_GELU_C * (v + _GELU_A * v * v * v)))
        return out

    @njit(cache=True)
    def _adam_update_nb(params, m, v, grad, lr, beta1, beta2, eps, step):
        c1 = 1.0 / (1.0 - beta1**step)
        c2 = 1.0 / (1.0 - beta2**step)
        for i in range(params.size):
            g = grad[i]
            mi = beta1 * m[i] + (1.0 - beta1) * g
            vi = beta2 * v[i] + (1.0 - beta2) * g * g
            m[i] = mi
            v[i] = vi
            params[i] -= lr * (mi * c1) / (math.sqrt(vi * c2) + eps)

    @njit(cache=True)
    def _ksg_counts_nb(x, y, k):
        n = x.shape[0]
        dx_dim = x.shape[1]
        dy_dim = y.shape[1]
        nx = np.empty(n, dtype=np.int64)
        ny = np.empty(n, dtype=np.int64)
        dxs = np.empty(n)
        dys = np.empty(n)
        best = np.empty(k)
        for i in range(n):
            for m in range(k):
                best[m] = np.inf
            for j in range(n):
                a = 0.0
                for c in range(dx_dim):
                    v = abs(x[i, c] - x[j, c])
                    if v > a:
                        a = v
                b = 0.0
                for c in range(dy_dim):
                    v = abs(y[i, c] - y[j, c])
                    if v > b:
                        b = v
                dxs[j] = a
                dys[j] = b
                if j == i:
                    continue
                z = a if a > b else b
                # keep the k smallest joint distances in ascending order
                if z < best[k - 1]:
                    m = k - 1
                    while m > 0 and best[m - 1] > z:
                        best[m] = best[m - 1]
                        m -= 1
                    best[m] = z
            eps = best[k - 1]
            cx = 0
            cy = 0
            for j in range(n):
                if j == i:
                    continue
                if dxs[j] < eps:
                    cx += 1
                if dys[j] < eps:
                    cy += 1
            nx[i] = cx
            ny[i] = cy
        return nx, ny


def cholesky_lower(a: np.ndarray) -> tuple[np.ndarray, int]:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if HAVE_NUMBA:
        return _cholesky_lower_nb(a)
    return cholesky_lower_np(a)


def gelu(x: np.ndarray) -> np.ndarray:
    return gelu_forward(x)[0]


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return gelu_grad_np(x)


def adam_update(params, m, v, grad, lr, beta1, beta2, eps, step) -> None:
    if HAVE_NUMBA:
        _adam_update_nb(params, m, v, grad, lr, beta1, beta2, eps, step)
    else:
        adam_update_np(params, m, v, grad, lr, beta1, beta2, eps, step)


def ksg_counts(x: np.ndarray, y: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if HAVE_NUMBA:
        return _ksg_counts_nb(x, y, k)
    return ksg_counts_np(x, y, k)


def backend() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
