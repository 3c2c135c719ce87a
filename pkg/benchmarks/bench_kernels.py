"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5] [--end-to-end]

``--end-to-end`` also times 300 training steps in two subprocesses, one with
``BRIDGEMI_DISABLE_NUMBA=1``.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bridgemi import _kernels as K

if not K.HAVE_NUMBA:
    sys.exit("numba is unavailable or disabled; nothing to compare")


def _best(fn, repeat: int) -> float:
    fn()  # compile / warm caches
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def cases():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(4000, 1)), rng.normal(size=(4000, 1))
    a = rng.normal(size=(60, 60))
    spd = a @ a.T + 60 * np.eye(60)
    n = 30_000
    p, m, v, g = rng.normal(size=n), np.zeros(n), np.zeros(n), rng.normal(size=n)
    h = rng.normal(size=(512, 64))
    yield "ksg counts (n=4000)", lambda: K._ksg_counts_nb(x, y, 1), lambda: K.ksg_counts_np(x, y, 1)
    yield "cholesky (60x60)", lambda: K._cholesky_lower_nb(spd), lambda: K.cholesky_lower_np(spd)
    yield (
        "adam update (30k params)",
        lambda: K._adam_update_nb(p, m, v, g, 1e-3, 0.9, 0.999, 1e-8, 10),
        lambda: K.adam_update_np(p, m, v, g, 1e-3, 0.9, 0.999, 1e-8, 10),
    )
    yield "gelu (512x64)", lambda: K._gelu_nb(h), lambda: K.gelu_np(h)


_STEPS = """
import time
from bridgemi import tasks, estimators as E
from bridgemi.numcore import Rng
x0, x1 = tasks.sample_pairs(tasks.make_correlated_gaussian(1, "bivariate"), 2000, Rng(0))
E.train_infobridge(x0, x1, E.EstimatorConfig(train_steps=20))
t = time.perf_counter()
E.train_infobridge(x0, x1, E.EstimatorConfig(train_steps=300))
print((time.perf_counter() - t) / 300 * 1e3)
"""


def end_to_end() -> dict[str, float]:
    out = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = {**os.environ, "BRIDGEMI_DISABLE_NUMBA": flag}
        res = subprocess.run([sys.executable, "-c", _STEPS], env=env, capture_output=True, text=True, check=True)
        out[label] = float(res.stdout.strip().splitlines()[-1])
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    print(f"{'kernel':<26}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, nb, npy in cases():
        t_nb, t_np = _best(nb, args.repeat), _best(npy, args.repeat)
        print(f"{name:<26}{t_nb * 1e6:>10.1f}us{t_np * 1e6:>10.1f}us{t_np / t_nb:>9.2f}x")
    if args.end_to_end:
        ms = end_to_end()
        print(f"{'train step (d=1)':<26}{ms['numba']:>10.2f}ms{ms['numpy']:>10.2f}ms{ms['numpy'] / ms['numba']:>9.2f}x")


if __name__ == "__main__":
    main()
