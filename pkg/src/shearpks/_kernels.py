"""Hot inner loops, compiled with numba when available.

Every kernel has a pure-numpy twin.  Set ``SHEARPKS_DISABLE_NUMBA=1`` to
force the numpy path (useful for debugging, and for checking that both
paths agree).  Both implementations are always importable through
``NUMPY_KERNELS`` and ``NUMBA_KERNELS`` so the benchmark can compare them.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("SHEARPKS_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
    "on",
)
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# numpy reference implementations


def _extrema_np(a):
    flat = a.ravel()
    finite = bool(np.isfinite(flat).all())
    if not finite:
        return np.nan, np.nan, False
    return float(flat.min()), float(flat.max()), True


def _xlogx_sum_np(a, floor):
    flat = a.ravel()
    return float(np.sum(flat * np.log(np.maximum(flat, floor))))


def _xlogplus_sum_np(a):
    flat = a.ravel()
    return float(np.sum(np.where(flat > 1.0, flat * np.log(np.maximum(flat, 1.0)), 0.0)))


def _gamma_np(s):
    s = np.asarray(s, dtype=float)
    low = (s - 1.0) - 0.5 * (s - 1.0) ** 2
    return np.where(s >= 1.0, np.log(np.maximum(s, 1.0)), low)


def _xgamma_sum_np(a):
    flat = a.ravel()
    return float(np.sum(flat * _gamma_np(flat)))


def _pair_log_sum_np(f, x, y, chunk=256):
    # sum_{i != j} f_i f_j log d(p_i, p_j) on the 2pi flat torus
    period = 2.0 * math.pi
    f = f.ravel()
    x = x.ravel()
    y = y.ravel()
    total = 0.0
    n = f.size
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        dx = np.abs(x[start:stop, None] - x[None, :])
        dy = np.abs(y[start:stop, None] - y[None, :])
        dx = np.minimum(dx, period - dx)
        dy = np.minimum(dy, period - dy)
        d2 = dx * dx + dy * dy
        idx = np.arange(start, stop)
        d2[idx - start, idx] = 1.0  # log 1 = 0 drops the diagonal
        rows = 0.5 * np.log(d2) @ f
        total += float(np.dot(f[start:stop], rows))
    return total


NUMPY_KERNELS = {
    "extrema": _extrema_np,
    "xlogx_sum": _xlogx_sum_np,
    "xlogplus_sum": _xlogplus_sum_np,
    "xgamma_sum": _xgamma_sum_np,
    "pair_log_sum": _pair_log_sum_np,
}


# ---------------------------------------------------------------------------
# numba implementations (serial loops: reductions run in a fixed order)

if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _extrema_nb(flat):
        lo = np.inf
        hi = -np.inf
        for i in range(flat.size):
            v = flat[i]
            if not np.isfinite(v):
                return np.nan, np.nan, False
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        return lo, hi, True

    @numba.njit(cache=True)
    def _xlogx_sum_nb(flat, floor):
        acc = 0.0
        for i in range(flat.size):
            v = flat[i]
            acc += v * math.log(v if v > floor else floor)
        return acc

    @numba.njit(cache=True)
    def _xlogplus_sum_nb(flat):
        acc = 0.0
        for i in range(flat.size):
            v = flat[i]
            if v > 1.0:
                acc += v * math.log(v)
        return acc

    @numba.njit(cache=True)
    def _xgamma_sum_nb(flat):
        acc = 0.0
        for i in range(flat.size):
            v = flat[i]
            if v >= 1.0:
                acc += v * math.log(v)
            else:
                w = v - 1.0
                acc += v * (w - 0.5 * w * w)
        return acc

    @numba.njit(cache=True)
    def _pair_log_sum_nb(f, x, y):
        period = 2.0 * math.pi
        n = f.size
        total = 0.0
        for i in range(n):
            row = 0.0
            for j in range(n):
                if i == j:
                    continue
                dx = abs(x[i] - x[j])
                dy = abs(y[i] - y[j])
                if period - dx < dx:
                    dx = period - dx
                if period - dy < dy:
                    dy = period - dy
                row += f[j] * 0.5 * math.log(dx * dx + dy * dy)
            total += f[i] * row
        return total

    def _extrema_nb_wrap(a):
        lo, hi, ok = _extrema_nb(np.ascontiguousarray(a).ravel())
        return float(lo), float(hi), bool(ok)

    def _xlogx_sum_nb_wrap(a, floor):
        return float(_xlogx_sum_nb(np.ascontiguousarray(a, dtype=np.float64).ravel(), floor))

    def _xlogplus_sum_nb_wrap(a):
        return float(_xlogplus_sum_nb(np.ascontiguousarray(a, dtype=np.float64).ravel()))

    def _xgamma_sum_nb_wrap(a):
        return float(_xgamma_sum_nb(np.ascontiguousarray(a, dtype=np.float64).ravel()))

    def _pair_log_sum_nb_wrap(f, x, y):
        return float(
            _pair_log_sum_nb(
                np.ascontiguousarray(f, dtype=np.float64).ravel(),
                np.ascontiguousarray(x, dtype=np.float64).ravel(),
                np.ascontiguousarray(y, dtype=np.float64).ravel(),
            )
        )

    NUMBA_KERNELS = {
        "extrema": _extrema_nb_wrap,
        "xlogx_sum": _xlogx_sum_nb_wrap,
        "xlogplus_sum": _xlogplus_sum_nb_wrap,
        "xgamma_sum": _xgamma_sum_nb_wrap,
        "pair_log_sum": _pair_log_sum_nb_wrap,
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

extrema = _ACTIVE["extrema"]
xlogx_sum = _ACTIVE["xlogx_sum"]
xlogplus_sum = _ACTIVE["xlogplus_sum"]
xgamma_sum = _ACTIVE["xgamma_sum"]
pair_log_sum = _ACTIVE["pair_log_sum"]
gamma = _gamma_np


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
