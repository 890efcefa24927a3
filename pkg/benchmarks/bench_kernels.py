"""
Time the numba kernels against their pure-numpy twins.

Run ``python benchmarks/bench_kernels.py``. Both implementations are imported
from :mod:`cola_sdp.kernels` directly, so the result does not depend on the
``COLA_SDP_DISABLE_NUMBA`` flag. Each line reports the best of several
repeats after one warm-up call (which also triggers JIT compilation).
"""

import argparse
import time

import numpy as np

from cola_sdp import kernels
from cola_sdp.dynamics import ForceModelConfig


def best_of(fn, repeat):
    fn()  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    p = ForceModelConfig(drag_enabled=True).params()
    y0 = np.array([6928137.0, 0.0, 0.0, 0.0, 4580.0, 6002.0])
    u = np.array([1e-5, -2e-5, 3e-6])
    r, v = y0[:3].copy(), y0[3:].copy()
    t = np.random.default_rng(0).standard_normal((10, 10))
    return [
        ("accel", lambda: kernels.np_accel(r, v, p), lambda: kernels.nb_accel(r, v, p)),
        ("propagate_fixed (1 step interval, 64 substeps)",
         lambda: kernels.np_propagate_fixed(y0, 117.0, 64, p, u),
         lambda: kernels.nb_propagate_fixed(y0, 117.0, 64, p, u)),
        ("propagate_adaptive (one revolution)",
         lambda: kernels.np_propagate_adaptive(y0, 5740.0, p, u, 1e-12, 1e-9, 30.0, 2_000_000),
         lambda: kernels.nb_propagate_adaptive(y0, 5740.0, p, u, 1e-12, 1e-9, 30.0, 2_000_000)),
        ("skron (order 10)", lambda: kernels.np_skron(t), lambda: kernels.nb_skron(t)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1
    print(f"{'kernel':48s} {'numpy [s]':>12s} {'numba [s]':>12s} {'speedup':>9s}")
    for name, np_fn, nb_fn in cases():
        a = np.asarray(np_fn()[0] if isinstance(np_fn(), tuple) else np_fn())
        b = np.asarray(nb_fn()[0] if isinstance(nb_fn(), tuple) else nb_fn())
        if not np.allclose(a, b, rtol=1e-10, atol=1e-9):
            raise SystemExit(f"{name}: implementations disagree")
        t_np = best_of(np_fn, args.repeat)
        t_nb = best_of(nb_fn, args.repeat)
        print(f"{name:48s} {t_np:12.3e} {t_nb:12.3e} {t_np / t_nb:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
