"""Flag-conditioned drift network ``v(x_t, t, x0, s)`` in plain numpy.

Topology::

    emb_t = proj_t(sinusoid(t)),  emb_s = proj_s(sinusoid(s))
    h = W_in [x_t, x0, emb_t, emb_s] + b_in
    h = h + W2 act(W1 h + b1) + b2          (n_residual_blocks times)
    out = W_out h + b_out                   (W_out, b_out start at zero)

Each ``proj`` is linear -> activation -> linear. All parameters live in one
flat float64 vector so Adam and the EMA shadow are single array operations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, ShapeMismatch, StaleCache
from .fileio import atomic_write_text
from .numcore import Rng, as_rng

CHECKPOINT_FORMAT = "bridgemi-checkpoint"
CHECKPOINT_VERSION = 1

def _tanh_forward(x):
    th = np.tanh(x)
    return th, th


# name -> (forward returning (value, aux), derivative from (pre-activation, aux))
_ACTIVATIONS = {
    "gelu": (_kernels.gelu_forward, _kernels.gelu_backward),
    "tanh": (_tanh_forward, lambda x, th: 1.0 - th * th),
}


@dataclass(frozen=True)
class NetConfig:
    """Architecture of the drift network.

    ``data_dim`` is the dimension of ``x_t`` (and of ``x0``, after padding);
    the trunk input is ``2 * data_dim`` plus both embeddings. Forward and
    backward passes run in ``compute_dtype``; the master weights, Adam moments
    and EMA shadow are always float64.
    """

    data_dim: int
    hidden_width: int = 64
    n_residual_blocks: int = 2
    embed_dim: int = 64
    activation: str = "gelu"
    compute_dtype: str = "float64"

    def __post_init__(self):
        if self.data_dim < 1:
            raise ConfigError("data_dim must be >= 1", "net.data_dim")
        if self.hidden_width < 1:
            raise ConfigError("hidden_width must be >= 1", "net.hidden_width")
        if self.embed_dim < 2 or self.embed_dim % 2:
            raise ConfigError("embed_dim must be even and >= 2", "net.embed_dim")
        if self.n_residual_blocks < 0:
            raise ConfigError("n_residual_blocks must be >= 0", "net.n_residual_blocks")
        if self.activation not in _ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}", "net.activation")
        if self.compute_dtype not in ("float32", "float64"):
            raise ConfigError("compute_dtype must be float32 or float64", "net.compute_dtype")

    @property
    def input_dim(self) -> int:
        return 2 * self.data_dim

    @classmethod
    def for_dim(cls, data_dim: int, **overrides) -> "NetConfig":
        """Width and embedding size scaled with the problem dimension."""
        if data_dim <= 5:
            width = 64
        elif data_dim <= 25:
            width = 128
        else:
            width = 256
        kw = {"hidden_width": width, "embed_dim": width}
        kw.update(overrides)
        return cls(data_dim=data_dim, **kw)


def sinusoidal_features(v: np.ndarray, embed_dim: int) -> np.ndarray:
    """``[sin(w_k v), cos(w_k v)]`` with ``w_k`` geometric from 1 to 1000."""
    v = np.asarray(v)
    if v.dtype != np.float32:
        v = v.astype(np.float64)
    freqs = np.geomspace(1.0, 1000.0, embed_dim // 2).astype(v.dtype)
    arg = v.reshape(-1, 1) * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def embed_time_and_flag(t: np.ndarray, s: np.ndarray, embed_dim: int) -> np.ndarray:
    """Raw sinusoidal features of ``t`` and ``s``, side by side (n, 2 * embed_dim).

    Inside the network each half then goes through its own two-layer projection.
    """
    if embed_dim % 2:
        raise ConfigError("embed_dim must be even", "embed_dim")
    return np.concatenate([sinusoidal_features(t, embed_dim), sinusoidal_features(s, embed_dim)], axis=1)


def _layout(cfg: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, h, e = cfg.data_dim, cfg.hidden_width, cfg.embed_dim
    layers = [
        ("t1.w", (e, e)), ("t1.b", (e,)), ("t2.w", (e, e)), ("t2.b", (e,)),
        ("s1.w", (e, e)), ("s1.b", (e,)), ("s2.w", (e, e)), ("s2.b", (e,)),
        ("in.w", (2 * d + 2 * e, h)), ("in.b", (h,)),
    ]  # fmt: skip
    for i in range(cfg.n_residual_blocks):
        layers += [(f"r{i}.w1", (h, h)), (f"r{i}.b1", (h,)), (f"r{i}.w2", (h, h)), (f"r{i}.b2", (h,))]
    layers += [("out.w", (h, d)), ("out.b", (d,))]
    return layers


def _views(flat: np.ndarray, layout) -> dict[str, np.ndarray]:
    out, off = {}, 0
    for name, shape in layout:
        size = math.prod(shape)
        out[name] = flat[off : off + size].reshape(shape)
        off += size
    return out


def _group_sum(rows: np.ndarray, inv: np.ndarray, n_groups: int) -> np.ndarray:
    """Sum ``rows`` over equal values of ``inv`` (result row k = sum of rows with inv == k)."""
    order = np.argsort(inv, kind="stable")
    starts = np.searchsorted(inv[order], np.arange(n_groups))
    return np.add.reduceat(rows[order], starts, axis=0)


class DriftNet:
    """Parameters, Adam moments and EMA shadow of one drift network."""

    def __init__(self, cfg: NetConfig, rng: Rng | int = 0, zero_output: bool = True):
        self.cfg = cfg
        self.layout = _layout(cfg)
        self.n_params = sum(math.prod(s) for _, s in self.layout)
        self.params = np.zeros(self.n_params)
        self.adam_m = np.zeros(self.n_params)
        self.adam_v = np.zeros(self.n_params)
        self.step_count = 0
        self._p = _views(self.params, self.layout)
        self._init_weights(as_rng(rng), zero_output)
        self.ema = self.params.copy()
        self._e = _views(self.ema, self.layout)
        self._cache = None

    def _init_weights(self, rng: Rng, zero_output: bool) -> None:
        shapes = dict(self.layout)
        for name, shape in self.layout:
            if name.startswith("out.") and zero_output:
                continue
            wname = name if len(shape) == 2 else name.replace(".b", ".w")
            bound = 1.0 / math.sqrt(shapes[wname][0])
            self._p[name][...] = rng.uniform(-bound, bound, shape)

    # -- evaluation -------------------------------------------------------

    def _check_inputs(self, xt, t, x0, s):
        xt = np.asarray(xt, dtype=np.float64)
        x0 = np.asarray(x0, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        s = np.asarray(s, dtype=np.float64).reshape(-1)
        d = self.cfg.data_dim
        if xt.ndim != 2 or x0.ndim != 2 or xt.shape[1] != d or x0.shape[1] != d:
            raise ShapeMismatch(f"expected x_t and x0 of shape (n, {d}), got {xt.shape} and {x0.shape}")
        n = xt.shape[0]
        if x0.shape[0] != n or t.shape[0] != n or s.size not in (1, n):
            raise ShapeMismatch(f"row counts differ: x_t {n}, x0 {x0.shape[0]}, t {t.shape[0]}, s {s.size}")
        s = np.broadcast_to(s, t.shape)
        return xt, t, x0, s

    def forward(
        self, xt, t, x0, s, use_ema: bool = False, keep_cache: bool = False, dtype: str | None = None
    ) -> np.ndarray:
        """Drift values for a batch; output has the shape of ``xt``.

        ``dtype`` overrides ``cfg.compute_dtype`` for this call.
        """
        xt, t, x0, s = inputs = self._check_inputs(xt, t, x0, s)
        dtype = np.dtype(dtype or self.cfg.compute_dtype)
        flat = self.ema if use_ema else self.params
        p = self._e if use_ema else self._p
        if dtype != np.float64:
            p = _views(flat.astype(dtype), self.layout)
            xt, t, x0, s = (v.astype(dtype) for v in (xt, t, x0, s))
        act, _ = _ACTIVATIONS[self.cfg.activation]
        e = self.cfg.embed_dim

        # t and s repeat heavily within a batch, so embed unique values only
        branches = []
        for tag, v in (("t", t), ("s", s)):
            uniq, inv = np.unique(v, return_inverse=True)
            emb = sinusoidal_features(uniq, e)
            a = emb @ p[f"{tag}1.w"] + p[f"{tag}1.b"]
            hid, aux = act(a)
            proj = hid @ p[f"{tag}2.w"] + p[f"{tag}2.b"]
            branches.append((tag, inv, emb, a, hid, aux, proj))

        inp = np.concatenate([xt, x0, branches[0][6][branches[0][1]], branches[1][6][branches[1][1]]], axis=1)
        h = inp @ p["in.w"] + p["in.b"]
        blocks = []
        for i in range(self.cfg.n_residual_blocks):
            a = h @ p[f"r{i}.w1"] + p[f"r{i}.b1"]
            g, aux = act(a)
            blocks.append((h, a, g, aux))
            h = h + g @ p[f"r{i}.w2"] + p[f"r{i}.b2"]
        out = h @ p["out.w"] + p["out.b"]

        if keep_cache:
            self._cache = {
                "inputs": inputs,
                "use_ema": use_ema,
                "p": p,
                "branches": branches,
                "inp": inp, "blocks": blocks, "h": h,
            }  # fmt: skip
        return out.astype(np.float64, copy=False)

    def __call__(self, xt, t, x0, s) -> np.ndarray:
        """EMA-weight drift in float64; lets a trained net stand in wherever a drift callable is expected."""
        return self.forward(xt, t, x0, s, use_ema=True, dtype="float64")

    def backward(self, residual: np.ndarray, inputs=None) -> np.ndarray:
        """Gradient of ``(1 / 2n) * sum ||residual||^2`` w.r.t. the live parameters.

        ``residual`` is ``forward(...) - target`` from the most recent
        ``forward(..., keep_cache=True)`` call. Passing ``inputs`` makes the
        call verify the cache belongs to the same batch.
        """
        c = self._cache
        if c is None:
            raise StaleCache("backward called without a cached forward pass")
        if inputs is not None and not _same_inputs(c["inputs"], inputs):
            raise StaleCache("cached forward pass was computed on different inputs")
        if c["use_ema"]:
            raise StaleCache("cached forward pass used EMA weights")
        p = c["p"]
        dtype = p["in.w"].dtype
        residual = np.asarray(residual, dtype=dtype)
        n = residual.shape[0]
        if residual.shape != c["inputs"][0].shape:
            raise ShapeMismatch(f"residual shape {residual.shape} does not match output {c['inputs'][0].shape}")

        _, dact = _ACTIVATIONS[self.cfg.activation]
        grad = np.zeros(self.n_params, dtype=dtype)
        g = _views(grad, self.layout)
        d, e = self.cfg.data_dim, self.cfg.embed_dim

        dout = residual / n
        g["out.w"][...] = c["h"].T @ dout
        g["out.b"][...] = dout.sum(axis=0)
        dh = dout @ p["out.w"].T
        for i in reversed(range(self.cfg.n_residual_blocks)):
            h_prev, a, gact, aux = c["blocks"][i]
            g[f"r{i}.w2"][...] = gact.T @ dh
            g[f"r{i}.b2"][...] = dh.sum(axis=0)
            da = (dh @ p[f"r{i}.w2"].T) * dact(a, aux)
            g[f"r{i}.w1"][...] = h_prev.T @ da
            g[f"r{i}.b1"][...] = da.sum(axis=0)
            dh = dh + da @ p[f"r{i}.w1"].T
        g["in.w"][...] = c["inp"].T @ dh
        g["in.b"][...] = dh.sum(axis=0)
        dinp = dh @ p["in.w"].T

        for col, (tag, inv, emb, a, hid, aux, _) in zip((2 * d, 2 * d + e), c["branches"]):
            dproj = _group_sum(dinp[:, col : col + e], inv, emb.shape[0])
            g[f"{tag}2.w"][...] = hid.T @ dproj
            g[f"{tag}2.b"][...] = dproj.sum(axis=0)
            da = (dproj @ p[f"{tag}2.w"].T) * dact(a, aux)
            g[f"{tag}1.w"][...] = emb.T @ da
            g[f"{tag}1.b"][...] = da.sum(axis=0)
        return grad.astype(np.float64, copy=False)

    # -- persistence ------------------------------------------------------

    def copy(self) -> "DriftNet":
        other = DriftNet.__new__(DriftNet)
        other.cfg, other.layout, other.n_params = self.cfg, self.layout, self.n_params
        other.params = self.params.copy()
        other.adam_m = self.adam_m.copy()
        other.adam_v = self.adam_v.copy()
        other.ema = self.ema.copy()
        other.step_count = self.step_count
        other._p = _views(other.params, other.layout)
        other._e = _views(other.ema, other.layout)
        other._cache = None
        return other

    def state_dict(self) -> dict:
        return {
            "net_config": asdict(self.cfg),
            "step_count": self.step_count,
            "params": self.params.tolist(),
            "ema_params": self.ema.tolist(),
            "adam_m": self.adam_m.tolist(),
            "adam_v": self.adam_v.tolist(),
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "DriftNet":
        net = cls(NetConfig(**state["net_config"]), rng=0)
        for attr, key in (("params", "params"), ("ema", "ema_params"), ("adam_m", "adam_m"), ("adam_v", "adam_v")):
            arr = np.asarray(state[key], dtype=np.float64)
            if arr.shape != (net.n_params,):
                raise ShapeMismatch(f"checkpoint field {key} has {arr.size} entries, expected {net.n_params}")
            getattr(net, attr)[...] = arr
        net.step_count = int(state["step_count"])
        return net


def _same_inputs(a, b) -> bool:
    for u, v in zip(a, b):
        if u is v:
            continue
        v = np.asarray(v, dtype=np.float64)
        if u.size != v.size or not np.array_equal(u.reshape(-1), v.reshape(-1)):
            return False
    return True


def adam_step(
    net: DriftNet,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_adam: float = 1e-8,
) -> DriftNet:
    """Bias-corrected Adam update, in place; returns ``net``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != net.params.shape:
        raise ShapeMismatch(f"gradient has shape {grad.shape}, parameters {net.params.shape}")
    net.step_count += 1
    _kernels.adam_update(net.params, net.adam_m, net.adam_v, grad, lr, beta1, beta2, eps_adam, net.step_count)
    return net


def ema_update(net: DriftNet, decay: float = 0.999) -> DriftNet:
    net.ema *= decay
    net.ema += (1.0 - decay) * net.params
    return net


def save_checkpoint(path: str, net: DriftNet, extra: dict | None = None) -> None:
    """Write a versioned JSON checkpoint atomically.

    ``extra`` carries whatever is needed to reuse the model, e.g. the bridge
    configuration and the standardization record.
    """
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **net.state_dict(), "extra": extra or {}}
    atomic_write_text(path, json.dumps(doc))


def load_checkpoint(path: str) -> tuple[DriftNet, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a bridgemi checkpoint", "format")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {doc.get('version')!r}", "version")
    return DriftNet.from_state_dict(doc), doc.get("extra", {})
