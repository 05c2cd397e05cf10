"""Empirical constants for the functional inequalities behind the estimates.

Each check draws a seeded ensemble of fields, evaluates LHS/RHS on one or
more grids and reports the extreme ratio.  Ensemble members are defined by
band-limited Fourier coefficients that do not depend on the grid, so
changing resolution only changes quadrature, never the fields themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .spectral import TWO_PI

# E[log |X - Y|] for X, Y independent and uniform on the unit square
UNIT_SQUARE_LOG_MEAN = -25.0 / 12.0 + math.pi / 3.0 + math.log(2.0) / 3.0

LOG_HLS_MAX_GRID = 64


@dataclass(frozen=True)
class RatioReport:
    """Extreme value of an inequality ratio over an ensemble.

    ``per_grid[i]`` is the extreme on ``grids[i]``; ``value`` is the one on
    the finest grid.  ``stability_pct`` is ``100 * |last - first| / |first|``
    and ``growth_pct`` the signed increase, both relative to the coarsest grid.
    """

    name: str
    statistic: str  # "max" or "min"
    ensemble_size: int
    seed: int
    value: float
    argext: int
    grids: tuple[tuple[int, ...], ...]
    per_grid: tuple[float, ...]
    stability_pct: float
    growth_pct: float
    homogeneity: float | None
    skipped: int = 0
    details: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.per_grid)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "ensemble_size": self.ensemble_size,
            "seed": self.seed,
            "value": self.value,
            "argext": self.argext,
            "grids": [list(g) for g in self.grids],
            "per_grid": list(self.per_grid),
            "stability_pct": self.stability_pct,
            "growth_pct": self.growth_pct,
            "homogeneity": self.homogeneity,
            "skipped": self.skipped,
            "finite": self.finite,
            "details": self.details,
        }


# ---------------------------------------------------------------------------
# band-limited ensembles


def synthesize(coeffs: dict[tuple[int, ...], complex], sizes: Sequence[int], real: bool = True) -> np.ndarray:
    """Evaluate ``sum_k a_k e^{i k.x}`` on a grid; ``a_{-k}`` is implied when ``real``.

    Every wavenumber must be resolvable (``|k_j| < N_j/2``).
    """
    sizes = tuple(int(n) for n in sizes)
    F = np.zeros(sizes, dtype=np.complex128)
    for k, a in coeffs.items():
        if any(abs(kk) >= n // 2 for kk, n in zip(k, sizes)):
            raise ValueError(f"mode {k} is not resolved on grid {sizes}")
        idx = tuple(kk % n for kk, n in zip(k, sizes))
        F[idx] += a
        if real:
            F[tuple((-kk) % n for kk, n in zip(k, sizes))] += np.conj(a)
    return np.fft.ifftn(F).real * F.size if real else np.fft.ifftn(F) * F.size


def _half_space(kmax: int, dim: int) -> list[tuple[int, ...]]:
    """One representative of every +-k pair with ``0 < |k|_inf <= kmax``."""
    out = []
    for k in np.ndindex(*([2 * kmax + 1] * dim)):
        kk = tuple(int(i) - kmax for i in k)
        if all(v == 0 for v in kk):
            continue
        first = next(v for v in kk if v != 0)
        if first > 0:
            out.append(kk)
    return out


def random_coeffs(
    rng: np.random.Generator, dim: int, kmax: int, decay: float, zero_mean: bool = True
) -> dict[tuple[int, ...], complex]:
    """Gaussian coefficients with amplitude ``|k|^-decay`` on ``|k|_inf <= kmax``."""
    out = {}
    for k in _half_space(kmax, dim):
        amp = float(np.linalg.norm(k)) ** -decay
        out[k] = amp * complex(rng.standard_normal(), rng.standard_normal())
    if not zero_mean:
        out[(0,) * dim] = complex(rng.standard_normal(), 0.0) / 2
    return out


# ---------------------------------------------------------------------------
# quadrature helpers on the 2pi torus


def _lp(values: np.ndarray, p: float, cell: float) -> float:
    return float((np.sum(np.abs(values) ** p) * cell) ** (1.0 / p))


def _wavenumbers(n: int) -> np.ndarray:
    k = np.fft.fftfreq(n, 1.0 / n)
    return k


def _grad_fft(F: np.ndarray, axes: Sequence[int]) -> list[np.ndarray]:
    """Spectral gradient components (real space) of a coefficient array, Nyquist dropped."""
    out = []
    for a in axes:
        n = F.shape[a]
        k = _wavenumbers(n)
        k[n // 2] = 0.0
        shape = [1] * F.ndim
        shape[a] = n
        out.append(np.fft.ifftn(1j * k.reshape(shape) * F))
    return out


def _ksq(shape: Sequence[int], axes: Sequence[int]) -> np.ndarray:
    ksq = np.zeros(shape)
    for a in axes:
        n = shape[a]
        s = [1] * len(shape)
        s[a] = n
        ksq = ksq + _wavenumbers(n).reshape(s) ** 2
    return ksq


def _report(
    name: str,
    statistic: str,
    seed: int,
    size: int,
    grids: Sequence[Sequence[int]],
    evaluate: Callable[[Sequence[int]], np.ndarray],
    homogeneity: float | None,
    details: dict | None = None,
) -> RatioReport:
    per_grid = []
    arg = -1
    skipped = 0
    for g in grids:
        vals = np.asarray(evaluate(tuple(g)), dtype=float)
        ok = ~np.isnan(vals)
        skipped = int((~ok).sum())
        if not ok.any():
            per_grid.append(math.nan)
            continue
        masked = np.where(ok, vals, -np.inf if statistic == "max" else np.inf)
        arg = int(np.argmax(masked) if statistic == "max" else np.argmin(masked))
        per_grid.append(float(masked[arg]))
    first, last = per_grid[0], per_grid[-1]
    if first != 0 and math.isfinite(first) and math.isfinite(last):
        growth = 100.0 * (last - first) / abs(first)
        stab = abs(growth)
    else:
        growth = stab = 0.0 if first == last else math.nan
    return RatioReport(
        name=name,
        statistic=statistic,
        ensemble_size=size,
        seed=seed,
        value=per_grid[-1],
        argext=arg,
        grids=tuple(tuple(int(n) for n in g) for g in grids),
        per_grid=tuple(per_grid),
        stability_pct=stab,
        growth_pct=growth,
        homogeneity=homogeneity,
        skipped=skipped,
        details=details or {},
    )


# ---------------------------------------------------------------------------
# Nash inequality on T


def nash_ratio(rho: np.ndarray) -> float:
    """``||rho||_2 / (||rho||_1^{2/3} ||rho'||_2^{1/3})`` for a mean-zero sample on T."""
    n = rho.size
    h = TWO_PI / n
    F = np.fft.fft(rho)
    (d,) = _grad_fft(F, (0,))
    return _lp(rho, 2, h) / (_lp(rho, 1, h) ** (2 / 3) * _lp(d.real, 2, h) ** (1 / 3))


def nash_ensemble(seed: int, size: int = 200, kmax: int = 32) -> list[dict]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        decay = float(rng.uniform(2.0, 4.0))
        out.append(random_coeffs(rng, 1, kmax, decay))
    return out


def nash_ratio_1d(seed: int = 0, size: int = 200, grids: Sequence[int] = (256, 512), kmax: int = 32) -> RatioReport:
    ens = nash_ensemble(seed, size, kmax)

    def evaluate(g):
        return np.array([nash_ratio(synthesize(c, g)) for c in ens])

    return _report("nash_1d", "max", seed, size, [(n,) for n in grids], evaluate, 0.0, {"kmax": kmax})


# ---------------------------------------------------------------------------
# mode-wise elliptic estimates in 2D


def mode_elliptic_ratio(nk: np.ndarray, k: int) -> float:
    """``|k|^{1/2} ||d_y c_k||_inf / ||n_k||_2`` with ``(k^2 - d_yy) c_k = n_k`` on T."""
    n = nk.size
    h = TWO_PI / n
    F = np.fft.fft(nk)
    ly = _wavenumbers(n)
    C = F / (k * k + ly**2)
    (d,) = _grad_fft(C, (0,))
    den = _lp(nk, 2, h)
    if den == 0:
        return math.nan
    return abs(k) ** 0.5 * float(np.max(np.abs(d))) / den


def zero_mode_elliptic_ratio(n0: np.ndarray) -> float:
    """``||d_y c_0||_inf / ||n_0 - nbar||_1`` with ``-d_yy c_0 = n_0 - nbar`` on T."""
    n = n0.size
    h = TWO_PI / n
    dev = n0 - n0.mean()
    F = np.fft.fft(dev)
    ly = _wavenumbers(n)
    inv = np.zeros_like(ly)
    np.divide(1.0, ly**2, out=inv, where=ly != 0)
    (d,) = _grad_fft(F * inv, (0,))
    den = _lp(dev, 1, h)
    if den == 0:
        return math.nan
    return float(np.max(np.abs(d.real))) / den


def _bump_coeffs(rng: np.random.Generator, width: float, lmax: int, nbumps: int) -> dict:
    """Complex sum of periodic Gaussian bumps of the given width, as y-coefficients."""
    out: dict = {}
    for _ in range(nbumps):
        y0 = float(rng.uniform(0, TWO_PI))
        amp = complex(rng.standard_normal(), rng.standard_normal())
        for l in range(-lmax, lmax + 1):
            a = amp * math.exp(-0.5 * (l * width) ** 2) * complex(math.cos(l * y0), -math.sin(l * y0)) / TWO_PI
            out[(l,)] = out.get((l,), 0.0) + a
    return out


def mode_ensemble(seed: int, k: int, size: int, lmax: int) -> list[dict]:
    """Complex y-profiles for x-mode ``k``.

    Half the members are random band-limited series, half are sums of a few
    bumps of width ``~1/k`` (the scale on which the mode-wise estimate is
    sharp), so the ensemble probes every k on its own natural scale.
    """
    rng = np.random.default_rng([seed, k])
    out = []
    for i in range(size):
        if i % 2 == 0:
            decay = float(rng.uniform(0.5, 2.0))
            c = {}
            for l in range(-lmax, lmax + 1):
                c[(l,)] = complex(rng.standard_normal(), rng.standard_normal()) * (1 + abs(l)) ** -decay
            out.append(c)
        else:
            width = float(rng.uniform(0.5, 2.0)) / k
            out.append(_bump_coeffs(rng, width, lmax, int(rng.integers(1, 4))))
    return out


def mode_elliptic_ratios_2d(
    seed: int = 0,
    size: int = 50,
    ks: Sequence[int] = tuple(range(1, 9)),
    grids: Sequence[int] = (256, 512),
    lmax: int = 96,
) -> tuple[RatioReport, RatioReport]:
    """Reports for the mode-wise ``d_y c_k`` bound and the zero-mode ``d_y c_0`` bound."""
    ens = {k: mode_ensemble(seed, k, size, lmax) for k in ks}
    per_k: dict[int, list[float]] = {}

    def evaluate_k(g):
        vals = []
        for k in ks:
            r = [mode_elliptic_ratio(synthesize(c, g, real=False), k) for c in ens[k]]
            per_k.setdefault(k, []).append(float(np.nanmax(r)))
            vals.extend(r)
        return np.array(vals)

    rep_k = _report(
        "mode_elliptic_2d",
        "max",
        seed,
        size * len(ks),
        [(n,) for n in grids],
        evaluate_k,
        0.0,
    )
    per_k_final = {str(k): v[-1] for k, v in per_k.items()}
    spread = max(per_k_final.values()) / min(per_k_final.values())
    rep_k = _with_details(rep_k, {"per_k_max": per_k_final, "k_spread": spread, "lmax": lmax})

    rng = np.random.default_rng([seed, 0])
    ens0 = [random_coeffs(rng, 1, 16, float(rng.uniform(1.0, 3.0)), zero_mean=False) for _ in range(size)]

    def evaluate_0(g):
        return np.array([zero_mode_elliptic_ratio(synthesize(c, g)) for c in ens0])

    rep_0 = _report("zero_mode_elliptic_2d", "max", seed, size, [(n,) for n in grids], evaluate_0, 0.0)
    return rep_k, rep_0


def _with_details(rep: RatioReport, extra: dict) -> RatioReport:
    from dataclasses import replace

    return replace(rep, details={**rep.details, **extra})


# ---------------------------------------------------------------------------
# full elliptic estimates


def _c_from_n(n: np.ndarray) -> np.ndarray:
    """Coefficients of ``c`` with ``-Lap c = n - nbar`` on the full grid."""
    F = np.fft.fftn(n)
    ksq = _ksq(n.shape, range(n.ndim))
    inv = np.zeros_like(ksq)
    np.divide(1.0, ksq, out=inv, where=ksq > 0)
    return F * inv


def _sup_grad(C: np.ndarray, axes: Sequence[int]) -> float:
    comps = _grad_fft(C, axes)
    mag = np.sqrt(sum(np.abs(c.real) ** 2 for c in comps))
    return float(np.max(mag))


def nonzero_elliptic_ratio(n: np.ndarray, p: float) -> float:
    """``||grad c_neq||_inf / ||n_neq||_p`` (x is axis 0); NaN if ``n_neq = 0``."""
    nz = n - n.mean(axis=0, keepdims=True)
    cell = TWO_PI**n.ndim / n.size
    den = _lp(nz, p, cell)
    if den <= 1e-14 * max(1.0, float(np.max(np.abs(n)))):
        return math.nan
    return _sup_grad(_c_from_n(nz), range(n.ndim)) / den


def zero_mode_ratio_3d(n: np.ndarray) -> float:
    """``||grad_y c_0||_inf / ||n_0 - nbar||_{L^3(T^2)}``; NaN for constant ``n_0``."""
    n0 = n.mean(axis=0)
    dev = n0 - n0.mean()
    cell = TWO_PI**2 / dev.size
    den = _lp(dev, 3, cell)
    if den <= 1e-14 * max(1.0, float(np.max(np.abs(n0)))):
        return math.nan
    return _sup_grad(_c_from_n(dev), (0, 1)) / den


def mode_interp_ratio_3d(nk: np.ndarray, k: int) -> float:
    """``||grad_y c_k||_inf / (||n_k||_2^{1/2} ||grad_y n_k||_2^{1/2})`` on T^2."""
    cell = TWO_PI**2 / nk.size
    F = np.fft.fftn(nk)
    C = F / (k * k + _ksq(nk.shape, (0, 1)))
    gc = _grad_fft(C, (0, 1))
    sup = float(np.max(np.sqrt(sum(np.abs(c) ** 2 for c in gc))))
    gn = _grad_fft(F, (0, 1))
    dn = math.sqrt(sum(float(np.sum(np.abs(c) ** 2)) for c in gn) * cell)
    l2 = _lp(nk, 2, cell)
    if l2 == 0 or dn == 0:
        return math.nan
    return sup / math.sqrt(l2 * dn)


def full_elliptic_ratios(
    dim: int,
    seed: int = 0,
    size: int = 50,
    grids: Sequence[int] | None = None,
    kmax: int = 6,
) -> list[RatioReport]:
    """2D: ``grad c_neq`` against ``L^3``.  3D: the mode-wise interpolation
    bound, ``grad c_neq`` against ``L^4`` and ``grad_y c_0`` against ``L^3(T^2)``.

    Grid entries are per-axis sizes (cubic grids).
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    if grids is None:
        grids = (64, 128) if dim == 2 else (32, 48)
    rng = np.random.default_rng([seed, dim])
    ens = []
    for i in range(size):
        decay = float(rng.uniform(1.0, 3.0))
        c = random_coeffs(rng, dim, kmax, decay, zero_mean=False)
        if dim == 3 and i % 10 == 9:
            # x-independent member: n_neq vanishes, the nonzero-mode ratio must skip it
            c = {k: v for k, v in c.items() if k[0] == 0}
        ens.append(c)
    shapes = [(n,) * dim for n in grids]

    if dim == 2:

        def ev(g):
            return np.array([nonzero_elliptic_ratio(synthesize(c, g), 3) for c in ens])

        return [_report("nonzero_elliptic_2d", "max", seed, size, shapes, ev, 0.0, {"p": 3, "kmax": kmax})]

    def ev_nz(g):
        return np.array([nonzero_elliptic_ratio(synthesize(c, g), 4) for c in ens])

    def ev_zero(g):
        return np.array([zero_mode_ratio_3d(synthesize(c, g)) for c in ens])

    mode_ens = []
    for _ in range(size):
        k = int(rng.integers(1, kmax + 1))
        coeffs = {}
        for key in np.ndindex(2 * kmax + 1, 2 * kmax + 1):
            l = (int(key[0]) - kmax, int(key[1]) - kmax)
            coeffs[l] = complex(rng.standard_normal(), rng.standard_normal()) * (1 + math.hypot(*l)) ** -1.5
        mode_ens.append((k, coeffs))

    def ev_mode(g):
        return np.array([mode_interp_ratio_3d(synthesize(c, g[1:], real=False), k) for k, c in mode_ens])

    return [
        _report("mode_interp_3d", "max", seed, size, shapes, ev_mode, 0.0, {"kmax": kmax}),
        _report("nonzero_elliptic_3d", "max", seed, size, shapes, ev_nz, 0.0, {"p": 4, "kmax": kmax}),
        _report("zero_mode_elliptic_3d", "max", seed, size, shapes, ev_zero, 0.0, {"p": 3, "kmax": kmax}),
    ]


# ---------------------------------------------------------------------------
# logarithmic HLS on T^2


def log_hls_deficit_value(f: np.ndarray) -> float:
    """``int f log f + (2/M) iint f(x) f(y) log d(x, y)`` on the flat 2pi-torus.

    The double integral is a direct sum over grid points; each cell's
    self-interaction uses the exact cell average ``h^4 (log h + kappa)``.
    """
    n0, n1 = f.shape
    if n0 != n1:
        raise ValueError("log-HLS sums need a square grid")
    if n0 > LOG_HLS_MAX_GRID:
        raise ValueError(f"direct O(N^4) summation is capped at {LOG_HLS_MAX_GRID}^2")
    if np.min(f) < 0:
        raise ValueError("log-HLS needs a nonnegative field")
    h = TWO_PI / n0
    cell = h * h
    M = float(f.sum() * cell)
    x = np.repeat(TWO_PI * np.arange(n0) / n0, n1)
    y = np.tile(TWO_PI * np.arange(n1) / n1, n0)
    flat = np.ascontiguousarray(f, dtype=np.float64).ravel()
    off = _kernels.pair_log_sum(flat, x, y) * cell * cell
    diag = float(np.sum(flat**2)) * cell * cell * (math.log(h) + UNIT_SQUARE_LOG_MEAN)
    ent = _kernels.xlogx_sum(flat, 1e-300) * cell
    return ent + (2.0 / M) * (off + diag)


def uniform_log_hls(mass: float, n: int) -> float:
    """Deficit of the uniform field from the O(N^2) mean of log d over one row."""
    h = TWO_PI / n
    c = np.arange(n) * h
    d = np.minimum(c, TWO_PI - c)
    d2 = d[:, None] ** 2 + d[None, :] ** 2
    d2[0, 0] = 1.0
    mean_log = (0.5 * float(np.sum(np.log(d2))) + (math.log(h) + UNIT_SQUARE_LOG_MEAN)) / (n * n)
    return mass * math.log(mass / TWO_PI**2) + 2.0 * mass * mean_log


def log_hls_ensemble(seed: int, size: int, kmax: int = 4) -> list[dict]:
    rng = np.random.default_rng([seed, 2])
    return [random_coeffs(rng, 2, kmax, float(rng.uniform(1.0, 2.5))) for _ in range(size)]


def log_hls_field(coeffs: dict, shape: Sequence[int], mass: float, contrast: float) -> np.ndarray:
    """``exp(contrast * g)`` normalized to ``mass``, with ``g`` the normalized series."""
    g = synthesize(coeffs, shape)
    g = g / max(1e-300, float(np.max(np.abs(g))))
    f = np.exp(contrast * g)
    return f * (mass / (f.sum() * TWO_PI**2 / f.size))


def log_hls_deficit(
    seed: int = 0,
    size: int = 24,
    mass: float = 4 * math.pi,
    grids: Sequence[int] = (32, 64),
    contrasts: Sequence[float] = (0.5, 1.5, 3.0),
) -> RatioReport:
    """Minimum deficit over an ensemble of positive fields of the given mass."""
    if not 0 < mass < 8 * math.pi:
        raise ValueError("log-HLS checks use 0 < M < 8 pi")
    ens = log_hls_ensemble(seed, size)

    def ev(g):
        return np.array(
            [log_hls_deficit_value(log_hls_field(c, g, mass, s)) for c in ens for s in contrasts]
        )

    return _report(
        "log_hls_t2",
        "min",
        seed,
        size * len(contrasts),
        [(n, n) for n in grids],
        ev,
        None,
        {"mass": mass, "contrasts": list(contrasts)},
    )
