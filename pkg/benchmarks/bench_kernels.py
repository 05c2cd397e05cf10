"""Time the numba kernels against the numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both tables are always available here; SHEARPKS_DISABLE_NUMBA only picks
which one the package uses.  Each kernel is checked to agree across the
two backends before it is timed.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from shearpks import _kernels as K


def cases(rng):
    field = rng.random((64, 64, 64)) + 0.01
    g = 48
    x, y = np.meshgrid(np.arange(g) * 2 * math.pi / g, np.arange(g) * 2 * math.pi / g, indexing="ij")
    f = rng.random((g, g))
    return {
        "extrema": (field,),
        "xlogx_sum": (field, 1e-300),
        "xlogplus_sum": (field * 3,),
        "xgamma_sum": (field * 2,),
        "pair_log_sum": (f.ravel(), x.ravel(), y.ravel()),
    }


def best_time(fn, args, repeat):
    out = math.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        out = min(out, time.perf_counter() - t)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':14s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}  rel.diff")
    for name, a in cases(rng).items():
        fnp, fnb = K.NUMPY_KERNELS[name], K.NUMBA_KERNELS[name]
        rnp, rnb = fnp(*a), fnb(*a)  # also triggers compilation
        if isinstance(rnp, tuple):
            diff = max(abs(p - q) / max(abs(p), 1e-300) for p, q in zip(rnp[:2], rnb[:2]))
        else:
            diff = abs(rnp - rnb) / max(abs(rnp), 1e-300)
        tnp = best_time(fnp, a, args.repeat)
        tnb = best_time(fnb, a, args.repeat)
        print(f"{name:14s} {1e3 * tnp:11.3f} {1e3 * tnb:11.3f} {tnp / tnb:8.2f}  {diff:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
