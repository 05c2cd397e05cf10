"""Periodic grids, Fourier transforms and spectral calculus on the 2pi-torus.

Conventions
-----------
Arrays are indexed ``[x, y]`` in 2D and ``[x, y1, y2]`` in 3D (row-major).
Every axis has period ``2*pi`` so wavenumbers are integers.  The forward
transform carries a ``1/(2 pi)`` factor per axis::

    F_k = (2 pi)^{-d} \\int e^{-i k.x} f(x) dx  ~=  N_tot^{-1} sum_j f_j e^{-i k.x_j}

and the inverse is the plain Fourier sum ``f(x) = sum_k F_k e^{i k.x}``.
With this normalization Parseval reads
``\\int |f|^2 dx = (2 pi)^d sum_k |F_k|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, 2pi)^dim``.

    ``dim`` 1 only appears as the y-grid of a 2D zero mode; the solver
    itself runs on 2D and 3D grids.
    """

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if not 1 <= len(sizes) <= 3:
            raise ValueError(f"grid dimension must be 1, 2 or 3, got {len(sizes)}")
        for n in sizes:
            if n < 8 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 8, got {sizes}")

    @property
    def dim(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(TWO_PI / n for n in self.sizes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return TWO_PI**self.dim

    def coords(self, axis: int) -> np.ndarray:
        n = self.sizes[axis]
        return TWO_PI * np.arange(n) / n

    def mesh(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*(self.coords(a) for a in range(self.dim)), indexing="ij")

    def wavenumbers(self, axis: int) -> np.ndarray:
        """Integer wavenumbers in FFT order, Nyquist stored as ``+N/2``."""
        n = self.sizes[axis]
        k = np.fft.fftfreq(n, 1.0 / n)
        k[n // 2] = n // 2
        return k

    def kvec(self, axis: int) -> np.ndarray:
        """Wavenumbers of ``axis`` shaped to broadcast over the full array."""
        shape = [1] * self.dim
        shape[axis] = self.sizes[axis]
        return self.wavenumbers(axis).reshape(shape)

    @cached_property
    def ksq(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for a in range(self.dim):
            out = out + self.kvec(a) ** 2
        return out

    def y_grid(self) -> "Grid":
        """Grid of the zero mode (all axes but x)."""
        return Grid(self.sizes[1:])

    def __hash__(self):
        return hash(self.sizes)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RealField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", _readonly(v))

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def l2_sq(self) -> float:
        return float(np.sum(self.values**2) * self.grid.cell_volume)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Full coefficient map ``F[k]`` (FFT index order) in the 1/(2pi) convention."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", _readonly(c))

    def l2_sq(self) -> float:
        """Parseval: ``(2 pi)^d sum |F_k|^2``."""
        return float(self.grid.volume * np.sum(np.abs(self.coeffs) ** 2))

    def mode(self, *k: int) -> complex:
        idx = tuple(int(kk) % n for kk, n in zip(k, self.grid.sizes))
        return complex(self.coeffs[idx])


def forward_transform(f: RealField) -> SpectralField:
    if not np.isfinite(f.values).all():
        bad = np.argwhere(~np.isfinite(f.values))[0]
        raise ValueError(f"non-finite sample at index {tuple(int(i) for i in bad)}")
    return SpectralField(f.grid, np.fft.fftn(f.values) / f.grid.npoints)


def hermitian_defect(F: SpectralField) -> float:
    c = F.coeffs
    flipped = c
    for axis in range(c.ndim):
        flipped = np.roll(np.flip(flipped, axis=axis), 1, axis=axis)
    return float(np.max(np.abs(c - np.conj(flipped))))


def inverse_transform(F: SpectralField, tol: float = 1e-10) -> RealField:
    scale = max(1.0, float(np.max(np.abs(F.coeffs))))
    defect = hermitian_defect(F)
    if defect > tol * scale:
        raise ValueError(f"coefficients are not Hermitian-symmetric (defect {defect:.3e})")
    return RealField(F.grid, np.fft.ifftn(F.coeffs).real * F.grid.npoints)


def solve_poisson(n: SpectralField, attract: bool = True) -> SpectralField:
    """Return c with ``-Lap c = n - nbar`` (``+Lap c`` if not ``attract``), zero-mean gauge."""
    ksq = n.grid.ksq
    inv = np.zeros_like(ksq)
    np.divide(1.0, ksq, out=inv, where=ksq > 0)
    c = n.coeffs * inv
    if not attract:
        c = -c
    return SpectralField(n.grid, c)


def derivative_multiplier(grid: Grid, axis: int, order: int) -> np.ndarray:
    if order not in (1, 2):
        raise ValueError(f"derivative order must be 1 or 2, got {order}")
    k = grid.kvec(axis)
    mult = (1j * k) ** order
    if order % 2:
        n = grid.sizes[axis]
        mult = np.where(np.abs(k) == n // 2, 0.0, mult)
    return mult


def derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * derivative_multiplier(f.grid, axis, order))


def dealias_mask(grid: Grid) -> np.ndarray:
    """True where every |k_axis| <= N_axis/3 (2/3 rule)."""
    mask = np.ones(grid.shape, dtype=bool)
    for a, n in enumerate(grid.sizes):
        mask &= np.abs(grid.kvec(a)) <= n / 3.0
    return mask


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, np.where(dealias_mask(f.grid), f.coeffs, 0.0))


def decompose_modes(f: RealField) -> tuple[RealField, RealField]:
    """Split into the x-average ``f0(y)`` and the mean-free-in-x remainder."""
    zero = f.values.mean(axis=0)
    nonzero = f.values - zero[None, ...]
    return RealField(f.grid.y_grid(), zero), RealField(f.grid, nonzero)


def lift(zero: RealField, grid: Grid) -> RealField:
    """Broadcast an x-independent y-field back onto ``grid``."""
    if zero.grid.sizes != grid.sizes[1:]:
        raise ValueError("zero-mode grid does not match the y-axes of the target grid")
    return RealField(grid, np.broadcast_to(zero.values[None, ...], grid.shape))


def x_modes(values: np.ndarray) -> np.ndarray:
    """Transform in x only: ``n_k(y)`` with the 1/(2pi) normalization, all signed k."""
    return np.fft.fft(values, axis=0) / values.shape[0]


def gradient(f: SpectralField) -> list[RealField]:
    return [inverse_transform(derivative(f, a, 1)) for a in range(f.grid.dim)]
