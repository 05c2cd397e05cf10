"""Functionals tracked along a run: norms, the hypocoercivity energy, free
energies, the lower-bound envelope and exponential rate fits.

Zero-mode quantities (``n0``, ``c0``) live on the y-torus ``T^{d-1}`` and
their norms are taken there.  Everything else is over the full torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .profiles import ShearProfile
from .spectral import (
    TWO_PI,
    Grid,
    RealField,
    decompose_modes,
    derivative_multiplier,
    forward_transform,
    solve_poisson,
)

ENTROPY_FLOOR = 1e-300

# ---------------------------------------------------------------------------
# norms


@dataclass(frozen=True)
class NormRecord:
    mass: float
    l2: float
    linf: float
    grad_l2: float
    zero_dev_l2: float
    dy_zero_l2: float
    nonzero_l2: float
    grad_nonzero_l2: float

    @property
    def nonzero_l2_sq(self) -> float:
        return self.nonzero_l2**2


def _grad_sq_integral(f: RealField) -> float:
    """``int |grad f|^2`` by Parseval, Nyquist excluded from odd derivatives."""
    F = forward_transform(f).coeffs
    total = 0.0
    for a in range(f.grid.dim):
        m = derivative_multiplier(f.grid, a, 1)
        total += float(np.sum(np.abs(m * F) ** 2))
    return total * f.grid.volume


def norm_suite(n: RealField) -> NormRecord:
    grid = n.grid
    n0, nz = decompose_modes(n)
    mass = n.integral()
    nbar = mass / grid.volume
    dev = RealField(n0.grid, n0.values - nbar)
    lo, hi, _ = _kernels.extrema(n.values)
    return NormRecord(
        mass=mass,
        l2=math.sqrt(n.l2_sq()),
        linf=max(abs(lo), abs(hi)),
        grad_l2=math.sqrt(_grad_sq_integral(n)),
        zero_dev_l2=math.sqrt(dev.l2_sq()),
        dy_zero_l2=math.sqrt(_grad_sq_integral(n0)),
        nonzero_l2=math.sqrt(nz.l2_sq()),
        grad_nonzero_l2=math.sqrt(_grad_sq_integral(nz)),
    )


# ---------------------------------------------------------------------------
# hypocoercivity energy


@dataclass(frozen=True)
class HypoWeights:
    """Multipliers ``alpha = ea A^-1/2 |k|^-1/2``, ``beta = eb/|k|``, ``gamma = eg A^1/2 |k|^-3/2``."""

    eps_alpha: float = 0.04
    eps_beta: float = 0.01
    eps_gamma: float = 0.04
    A: float = 1.0

    def __post_init__(self):
        for name in ("eps_alpha", "eps_gamma", "A"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not (math.isfinite(self.eps_beta) and self.eps_beta >= 0):
            raise ValueError(f"eps_beta must be nonnegative and finite, got {self.eps_beta}")

    @property
    def constraint_ok(self) -> bool:
        # 8 beta^2 <= alpha gamma; the powers of |k| and A cancel
        return 8.0 * self.eps_beta**2 <= self.eps_alpha * self.eps_gamma

    def with_A(self, A: float) -> "HypoWeights":
        return replace(self, A=float(A))

    def alpha(self, k):
        return self.eps_alpha * self.A**-0.5 * np.abs(k) ** -0.5

    def beta(self, k):
        return self.eps_beta / np.abs(k)

    def gamma(self, k):
        return self.eps_gamma * self.A**0.5 * np.abs(k) ** -1.5


@dataclass(frozen=True)
class PhiRecord:
    """``per_k[j]`` is the contribution of the pair ``k = +-(j+1)``."""

    tau: float
    k: np.ndarray
    per_k: np.ndarray
    total: float
    l2: float
    alpha_term: float
    beta_term: float
    gamma_term: float


@dataclass(frozen=True)
class _ModeForms:
    """Per signed-k quadratic pieces on the y-grid (already scaled to T^d)."""

    k: np.ndarray  # signed wavenumbers, k != 0
    l2: np.ndarray
    dy_sq: np.ndarray  # ||d_y n_k||^2, y1 only or full y-gradient
    cross: np.ndarray  # Re <i u' n_k, d_y1 n_k>
    u1_sq: np.ndarray  # ||u' n_k||^2
    dy_full_sq: np.ndarray


def _mode_forms(n: RealField, profile: ShearProfile, y_gradient: str) -> _ModeForms:
    grid = n.grid
    if grid.dim not in (2, 3):
        raise ValueError("mode forms need a 2D or 3D field")
    if y_gradient not in ("y1", "full"):
        raise ValueError(f"y_gradient must be 'y1' or 'full', got {y_gradient!r}")
    nx = grid.sizes[0]
    nk = np.fft.fft(n.values, axis=0) / nx
    kx = grid.wavenumbers(0)
    keep = kx != 0
    nk = nk[keep]
    kx = kx[keep]

    yaxes = tuple(range(1, grid.dim))
    F = np.fft.fftn(nk, axes=yaxes)
    derivs = []
    for a in yaxes:
        m = derivative_multiplier(grid, a, 1)  # shape broadcastable with axis a
        derivs.append(np.fft.ifftn(F * m, axes=yaxes))
    dy1 = derivs[0]
    y = grid.coords(1)
    shape = [1] * grid.dim
    shape[1] = -1
    up = profile.du(y).reshape(shape)

    # the x-integral contributes 2pi; the y-integral is a plain quadrature
    w = TWO_PI * float(np.prod(grid.spacing[1:]))
    red = tuple(range(1, grid.dim))
    l2 = w * np.sum(np.abs(nk) ** 2, axis=red)
    d1 = w * np.sum(np.abs(dy1) ** 2, axis=red)
    dfull = w * sum(np.sum(np.abs(d) ** 2, axis=red) for d in derivs)
    cross = w * np.sum((1j * up * nk * np.conj(dy1)).real, axis=red)
    u1 = w * np.sum((up**2) * np.abs(nk) ** 2, axis=red)
    return _ModeForms(kx, l2, d1 if y_gradient == "y1" else dfull, cross, u1, dfull)


def _fold(kx: np.ndarray, values: np.ndarray, kmax: int) -> np.ndarray:
    out = np.zeros(kmax)
    np.add.at(out, np.abs(kx).astype(int) - 1, values)
    return out


def phi_energy(
    n: RealField,
    profile: ShearProfile,
    weights: HypoWeights,
    tau: float = math.nan,
    require_constraint: bool = True,
    y_gradient: str = "y1",
) -> PhiRecord:
    """Hypocoercivity energy of the nonzero x-modes, summed k by k.

    In 3D the alpha term and the cross term use the y1 derivative only (the
    shear direction); ``y_gradient='full'`` puts the full y-gradient in the
    alpha term instead.  Set ``require_constraint=False`` to evaluate with
    weights that break ``8 beta^2 <= alpha gamma`` (adversarial checks).
    """
    if require_constraint and not weights.constraint_ok:
        raise ValueError(
            f"weights violate 8 eps_beta^2 <= eps_alpha eps_gamma: "
            f"{8 * weights.eps_beta**2:.3g} > {weights.eps_alpha * weights.eps_gamma:.3g}"
        )
    f = _mode_forms(n, profile, y_gradient)
    k = f.k
    t1 = f.l2
    ta = weights.alpha(k) * f.dy_sq
    tb = 2.0 * k * weights.beta(k) * f.cross
    tg = k**2 * weights.gamma(k) * f.u1_sq
    kmax = n.grid.sizes[0] // 2
    per_k = _fold(k, t1 + ta + tb + tg, kmax)
    return PhiRecord(
        tau=float(tau),
        k=np.arange(1, kmax + 1),
        per_k=per_k,
        total=float(per_k.sum()),
        l2=float(t1.sum()),
        alpha_term=float(ta.sum()),
        beta_term=float(tb.sum()),
        gamma_term=float(tg.sum()),
    )


@dataclass(frozen=True)
class SandwichReport:
    """Ratios of the two-sided equivalence between ``Phi_k`` and a weighted H^1 norm.

    ``lower`` is ``max_k (|n_k|^2 + a |d_y n_k|^2) / Phi_k`` and ``upper``
    is ``max_k Phi_k / (|n_k|^2 (1 + |k|^1/2 A^1/2) + a |d_y n_k|^2)`` with
    ``a = A^-1/2 |k|^-1/2``.  ``C_u = max(lower, upper)``.
    """

    A: float
    lower: float
    upper: float
    C_u: float
    modes_used: int
    phi_min: float


def _sandwich_terms(f: _ModeForms, weights: HypoWeights):
    k = f.k
    A = weights.A
    phi = f.l2 + weights.alpha(k) * f.dy_sq + 2 * k * weights.beta(k) * f.cross + k**2 * weights.gamma(k) * f.u1_sq
    a = A**-0.5 * np.abs(k) ** -0.5
    low = f.l2 + a * f.dy_sq
    high = f.l2 * (1 + np.abs(k) ** 0.5 * A**0.5) + a * f.dy_sq
    return phi, low, high


def phi_sandwich_check(
    n: RealField,
    profile: ShearProfile,
    weights: HypoWeights,
    A: float | None = None,
    y_gradient: str = "y1",
    rtol: float = 1e-12,
) -> SandwichReport:
    """Sandwich ratios for one field.  Modes with negligible energy are skipped."""
    w = weights if A is None else weights.with_A(A)
    f = _mode_forms(n, profile, y_gradient)
    phi, low, high = _sandwich_terms(f, w)
    scale = float(np.max(f.l2)) if f.l2.size else 0.0
    use = f.l2 > rtol * scale if scale > 0 else np.zeros_like(f.l2, dtype=bool)
    if not np.any(use):
        return SandwichReport(w.A, 0.0, 0.0, 0.0, 0, math.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo_r = np.where(phi[use] > 0, low[use] / phi[use], np.inf)
    hi_r = phi[use] / high[use]
    lower = float(np.max(lo_r))
    upper = float(np.max(hi_r))
    return SandwichReport(w.A, lower, upper, max(lower, upper), int(use.sum()), float(np.min(phi[use])))


def _diff_matrix(ny: int) -> np.ndarray:
    """Spectral first-derivative matrix on ``ny`` equispaced points, Nyquist dropped."""
    k = np.fft.fftfreq(ny, 1.0 / ny)
    k[ny // 2] = 0.0
    eye = np.eye(ny)
    return np.fft.ifft(1j * k[:, None] * np.fft.fft(eye, axis=0), axis=0)


def extremal_sandwich_modes(
    profile: ShearProfile, weights: HypoWeights, k: int, ny: int
) -> tuple[float, np.ndarray, float, np.ndarray]:
    """Discrete extremizers of the two sandwich ratios for one x-mode on a 2D grid.

    Solves the generalized eigenproblems ``Q v = lam P v`` over y-profiles,
    where ``P`` is the quadratic form of ``Phi_k``.  Returns
    ``(lower_sup, v_lower, upper_sup, v_upper)``.  ``P`` must be positive
    definite, which holds whenever the weight constraint does.
    """
    y = TWO_PI * np.arange(ny) / ny
    D = _diff_matrix(ny)
    U = np.diag(profile.du(y))
    DhD = D.conj().T @ D
    cross = 1j * D.conj().T @ U - 1j * U @ D  # Re<i u' v, D v> = v^H (cross/2) v
    A = weights.A
    P = (
        np.eye(ny)
        + weights.alpha(k) * DhD
        + k * weights.beta(k) * cross
        + k**2 * weights.gamma(k) * (U @ U)
    )
    a = A**-0.5 * k**-0.5
    Q_low = np.eye(ny) + a * DhD
    Q_high = (1 + k**0.5 * A**0.5) * np.eye(ny) + a * DhD

    def top(num, den):
        L = np.linalg.cholesky(0.5 * (den + den.conj().T))
        Li = np.linalg.inv(L)
        M = Li @ num @ Li.conj().T
        vals, vecs = np.linalg.eigh(0.5 * (M + M.conj().T))
        v = Li.conj().T @ vecs[:, -1]
        return float(vals[-1]), v

    lower_sup, v_low = top(Q_low, P)
    # Phi / Q_high is the top eigenvalue of the pencil (P, Q_high)
    upper_sup, v_up = top(P, Q_high)
    return lower_sup, v_low, upper_sup, v_up


def mode_field(grid: Grid, k: int, profile_y: np.ndarray) -> RealField:
    """Real field ``2 Re(v(y) e^{ikx})`` on a 2D grid."""
    if grid.dim != 2:
        raise ValueError("mode_field builds 2D fields")
    x = grid.coords(0)[:, None]
    return RealField(grid, 2.0 * (profile_y[None, :] * np.exp(1j * k * x)).real)


def aligned_field(grid: Grid, profile: ShearProfile, weights: HypoWeights, k: int = 1) -> RealField:
    """Field whose cross term is as negative as possible relative to its alpha term.

    Uses ``n_k(y) = exp(-i s u(y))`` with the phase rate
    ``s = k beta / alpha`` that minimizes
    ``alpha |d_y n_k|^2 + 2 k beta Re<i u' n_k, d_y n_k>``.  When
    ``8 beta^2 <= alpha gamma`` is badly violated this drives ``Phi_k``
    below ``|n_k|^2 / 2``.
    """
    y = grid.coords(1)
    s = k * weights.beta(k) / weights.alpha(k)
    v = np.exp(-1j * s * profile.u(y))
    return mode_field(grid, k, v)


# ---------------------------------------------------------------------------
# free energies


@dataclass(frozen=True)
class FreeEnergyRecord:
    tau: float
    entropy: float
    interaction: float
    F: float
    zero_mode_F: float = math.nan
    F_gamma: float = math.nan
    entropy_plus: float = math.nan


def _interaction(n: RealField) -> float:
    """``(1/2) int |grad c|^2`` with ``-Lap c = n - nbar``."""
    C = solve_poisson(forward_transform(n))
    total = 0.0
    for a in range(n.grid.dim):
        m = derivative_multiplier(n.grid, a, 1)
        total += float(np.sum(np.abs(m * C.coeffs) ** 2))
    return 0.5 * total * n.grid.volume


def _entropy(n: RealField) -> float:
    return _kernels.xlogx_sum(n.values, ENTROPY_FLOOR) * n.grid.cell_volume


def free_energy(n: RealField, mode: str = "full_domain", tau: float = math.nan) -> FreeEnergyRecord:
    """``F = int n log n - (1/2) int |grad c|^2``.

    ``mode='zero_mode_of_3d'`` evaluates the 2D functional of the x-average
    of a 3D field (recorded in ``zero_mode_F`` as well as ``F``).
    """
    if mode in ("full_domain", "full_domain_2d"):
        target = n
    elif mode == "zero_mode_of_3d":
        if n.grid.dim != 3:
            raise ValueError("zero_mode_of_3d needs a 3D field")
        target, _ = decompose_modes(n)
    else:
        raise ValueError(f"unknown free-energy mode {mode!r}")
    ent = _entropy(target)
    inter = _interaction(target)
    F = ent - inter
    rec = FreeEnergyRecord(tau=float(tau), entropy=ent, interaction=inter, F=F)
    if mode == "zero_mode_of_3d":
        rec = replace(rec, zero_mode_F=F)
    return rec


def gamma(s):
    """``log s`` for ``s >= 1``, ``(s-1) - (s-1)^2/2`` below (C^1 at 1)."""
    return _kernels.gamma(s)


def gamma_free_energy(n0: RealField) -> float:
    """``int n0 Gamma(n0) - (1/2) int n0 c0`` on the grid of ``n0``."""
    if np.min(n0.values) < 0:
        raise ValueError("gamma_free_energy needs a nonnegative field")
    ent = _kernels.xgamma_sum(n0.values) * n0.grid.cell_volume
    return ent - _interaction(n0)


def entropy_plus(n0: RealField) -> float:
    if np.min(n0.values) < 0:
        raise ValueError("entropy_plus needs a nonnegative field")
    return _kernels.xlogplus_sum(n0.values) * n0.grid.cell_volume


def free_energy_record(n: RealField, tau: float = math.nan) -> FreeEnergyRecord:
    """Everything at once, as written to the diagnostics CSV.

    ``F`` is over the full domain.  ``F_gamma`` and ``entropy_plus`` are
    for the x-average; in 3D the 2D free energy of the x-average is filled
    in as ``zero_mode_F``.  Gamma terms are NaN if the field has gone
    negative.
    """
    rec = free_energy(n, "full_domain", tau)
    n0, _ = decompose_modes(n)
    zf = free_energy(n, "zero_mode_of_3d").F if n.grid.dim == 3 else math.nan
    if np.min(n0.values) >= 0:
        fg = gamma_free_energy(n0)
        ep = entropy_plus(n0)
    else:
        fg = ep = math.nan
    return replace(rec, zero_mode_F=zf, F_gamma=fg, entropy_plus=ep)


# ---------------------------------------------------------------------------
# lower-bound envelope


@dataclass(frozen=True)
class LowerBoundRecord:
    tau: float
    observed_min: float
    envelope: float
    violated: bool


def envelope(q: float, nbar: float, A: float, tau):
    return q * np.exp(-nbar * np.asarray(tau, dtype=float) / A)


def min_bound_check(
    series: Iterable, q: float, A: float, nbar: float, rtol: float = 1e-6
) -> list[LowerBoundRecord]:
    """Compare grid minima with ``q exp(-nbar tau / A)``.

    ``series`` yields either states (anything with ``tau`` and ``n``) or
    ``(tau, min)`` pairs.
    """
    if not q > 0:
        raise ValueError("the envelope needs q > 0")
    out = []
    for item in series:
        if hasattr(item, "tau"):
            tau, mn = float(item.tau), float(np.min(item.n))
        else:
            tau, mn = float(item[0]), float(item[1])
        env = float(envelope(q, nbar, A, tau))
        out.append(LowerBoundRecord(tau, mn, env, bool(mn < env * (1.0 - rtol))))
    return out


# ---------------------------------------------------------------------------
# rate fits


MIN_FIT_SAMPLES = 20
MIN_DECADES = 2.0


@dataclass(frozen=True)
class RateFit:
    """Fit of ``value ~ amplitude * exp(-rate * tau)`` on ``[t0, t1]``."""

    series: str
    t0: float
    t1: float
    rate: float
    amplitude: float
    residual: float
    samples: int
    decades: float
    reliable: bool
    notes: tuple[str, ...] = field(default=())


def post_transient_start(values: np.ndarray) -> int:
    """Index of the first sample below half of the running maximum (0 if none)."""
    runmax = np.maximum.accumulate(values)
    hit = np.nonzero(values < 0.5 * runmax)[0]
    return int(hit[0]) if hit.size else 0


def fit_decay_rate(
    tau: Sequence[float],
    values: Sequence[float],
    window: str | tuple[float, float] = "post_transient",
    series: str = "value",
    floor_rtol: float = 1e-24,
) -> RateFit:
    """Least-squares line through ``(tau, log value)``.

    ``window`` is ``'post_transient'`` (drop samples before the first one
    below half the running max), ``'full'`` or an explicit ``(t0, t1)``.
    Samples below ``floor_rtol`` times the first windowed value are
    treated as round-off and dropped from the tail.
    """
    t = np.asarray(tau, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("tau and values must be 1D arrays of equal length")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError("rate fits need finite positive values")
    if window == "post_transient":
        i0 = post_transient_start(v)
        sel = np.arange(i0, t.size)
    elif window == "full":
        sel = np.arange(t.size)
    else:
        lo, hi = window
        sel = np.nonzero((t >= lo) & (t <= hi))[0]
    notes = []
    if sel.size:
        keep = v[sel] >= floor_rtol * v[sel[0]]
        if not keep.all():
            cut = int(np.argmin(keep))
            sel = sel[:cut]
            notes.append(f"tail below {floor_rtol:g} of the window start dropped")
    if sel.size < MIN_FIT_SAMPLES:
        raise ValueError(f"rate fit needs >= {MIN_FIT_SAMPLES} samples in the window, got {sel.size}")
    tw, lv = t[sel], np.log(v[sel])
    slope, icpt = np.polyfit(tw, lv, 1)
    resid = lv - (slope * tw + icpt)
    decades = float((lv.max() - lv.min()) / math.log(10.0))
    reliable = decades >= MIN_DECADES
    if not reliable:
        notes.append(f"series decays only {decades:.2f} decades in the window")
    return RateFit(
        series=series,
        t0=float(tw[0]),
        t1=float(tw[-1]),
        rate=float(-slope),
        amplitude=float(math.exp(icpt)),
        residual=float(math.sqrt(np.mean(resid**2))),
        samples=int(sel.size),
        decades=decades,
        reliable=reliable,
        notes=tuple(notes),
    )
