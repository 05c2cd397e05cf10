"""Closed-form shear profiles u(y) and their critical-point certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi

# certificate thresholds (artifact choices, reported with every check)
CRIT_U1_TOL = 1e-10
CRIT_U2_MIN = 1e-8
SCAN_POINTS = 4096

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ShearProfile:
    name: str
    params: dict
    u: Fn
    du: Fn
    d2u: Fn
    d3u: Fn
    critical_points: tuple[tuple[float, float], ...] = field(default=())

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def sup_du(self, n: int = SCAN_POINTS) -> float:
        y = TWO_PI * np.arange(n) / n
        return float(np.max(np.abs(self.du(y))))


@dataclass(frozen=True)
class ProfileCertificate:
    name: str
    passed: bool
    min_abs_d2u: float
    scan_points: int
    u1_tol: float
    u2_min: float
    failures: tuple[str, ...]


def _sin_family(name: str, m: int, params: dict) -> ShearProfile:
    crit = []
    for j in range(2 * m):
        y = (math.pi / 2 + j * math.pi) / m
        crit.append((y % TWO_PI, -(m**2) * math.sin(m * y)))
    crit.sort()
    return ShearProfile(
        name=name,
        params=params,
        u=lambda y: np.sin(m * np.asarray(y)),
        du=lambda y: m * np.cos(m * np.asarray(y)),
        d2u=lambda y: -(m**2) * np.sin(m * np.asarray(y)),
        d3u=lambda y: -(m**3) * np.cos(m * np.asarray(y)),
        critical_points=tuple(crit),
    )


def _skewed(a: float) -> ShearProfile:
    if not abs(a) < 0.5:
        raise ValueError(f"skewed profile needs |a| < 1/2 for non-degenerate critical points, got {a}")

    def du(y):
        y = np.asarray(y)
        return np.cos(y) + 2 * a * np.cos(2 * y)

    def d2u(y):
        y = np.asarray(y)
        return -np.sin(y) - 4 * a * np.sin(2 * y)

    if a == 0.0:
        c = 0.0
    else:
        # u' = 0  <=>  4a c^2 + c - 2a = 0 with c = cos y; the other root has |c| > 1
        c = (-1.0 + math.sqrt(1.0 + 32.0 * a * a)) / (8.0 * a)
    y0 = math.acos(c)
    crit = sorted((y % TWO_PI, float(d2u(y))) for y in (y0, TWO_PI - y0))
    return ShearProfile(
        name="skewed",
        params={"a": a},
        u=lambda y: np.sin(np.asarray(y)) + a * np.sin(2 * np.asarray(y)),
        du=du,
        d2u=d2u,
        d3u=lambda y: -np.cos(np.asarray(y)) - 8 * a * np.cos(2 * np.asarray(y)),
        critical_points=tuple(crit),
    )


def _constant(value: float, name: str) -> ShearProfile:
    zero = lambda y: np.zeros_like(np.asarray(y, dtype=float))  # noqa: E731
    return ShearProfile(
        name=name,
        params={"value": value} if name == "constant" else {},
        u=lambda y: np.full_like(np.asarray(y, dtype=float), value),
        du=zero,
        d2u=zero,
        d3u=zero,
    )


def _sin_cubed() -> ShearProfile:
    def du(y):
        y = np.asarray(y)
        return 3 * np.sin(y) ** 2 * np.cos(y)

    def d2u(y):
        y = np.asarray(y)
        return 6 * np.sin(y) * np.cos(y) ** 2 - 3 * np.sin(y) ** 3

    def d3u(y):
        y = np.asarray(y)
        return 6 * np.cos(y) ** 3 - 21 * np.sin(y) ** 2 * np.cos(y)

    crit = tuple((y, float(d2u(y))) for y in (0.0, math.pi / 2, math.pi, 3 * math.pi / 2))
    return ShearProfile(
        name="sin_cubed",
        params={},
        u=lambda y: np.sin(np.asarray(y)) ** 3,
        du=du,
        d2u=d2u,
        d3u=d3u,
        critical_points=crit,
    )


BUILTIN = ("kolmogorov", "multilayer", "skewed", "zero", "constant", "sin_cubed")


def make_profile(name: str, **params) -> ShearProfile:
    """Build a named profile.

    ``multilayer`` takes ``m`` (1..4) and is also accepted as ``multilayer_<m>``;
    ``skewed`` takes ``a`` with ``|a| < 1/2``.  ``zero``, ``constant`` and
    ``sin_cubed`` are degenerate on purpose: they build fine but fail
    :func:`validate_profile`.
    """
    if name.startswith("multilayer_"):
        params = {**params, "m": int(name.split("_", 1)[1])}
        name = "multilayer"
    if name == "kolmogorov":
        return _sin_family("kolmogorov", 1, {})
    if name == "multilayer":
        m = int(params.get("m", 2))
        if not 1 <= m <= 4:
            raise ValueError(f"multilayer profile needs 1 <= m <= 4, got {m}")
        return _sin_family(f"multilayer_{m}", m, {"m": m})
    if name == "skewed":
        return _skewed(float(params.get("a", 0.3)))
    if name == "zero":
        return _constant(0.0, "zero")
    if name == "constant":
        return _constant(float(params.get("value", 1.0)), "constant")
    if name == "sin_cubed":
        return _sin_cubed()
    raise ValueError(f"unknown shear profile {name!r}; known: {', '.join(BUILTIN)}")


def validate_profile(p: ShearProfile, scan_points: int = SCAN_POINTS) -> ProfileCertificate:
    failures = []
    y = TWO_PI * np.arange(scan_points) / scan_points
    u1 = p.du(y)

    if abs(float(p.u(np.array([0.0]))[0]) - float(p.u(np.array([TWO_PI]))[0])) > 1e-12:
        failures.append("u is not 2pi-periodic")

    if np.max(np.abs(u1)) < CRIT_U1_TOL:
        failures.append("u' vanishes identically: critical set is not finite")

    d2 = []
    for yc, _ in p.critical_points:
        g1 = abs(float(p.du(np.array([yc]))[0]))
        g2 = abs(float(p.d2u(np.array([yc]))[0]))
        d2.append(g2)
        if g1 >= CRIT_U1_TOL:
            failures.append(f"listed critical point y={yc:.12g} has |u'|={g1:.3e}")
        if g2 <= CRIT_U2_MIN:
            failures.append(f"degenerate critical point y={yc:.12g}: |u''|={g2:.3e}")

    # every sign change of u' on the scan must bracket a listed critical point
    listed = np.array([yc for yc, _ in p.critical_points])
    s = np.sign(u1)
    nxt = np.roll(s, -1)
    h = TWO_PI / scan_points
    for i in np.nonzero(s * nxt < 0)[0]:
        lo, hi = y[i], y[i] + h
        if listed.size == 0 or not np.any(
            ((listed >= lo - 1e-12) & (listed <= hi + 1e-12))
            | ((listed + TWO_PI >= lo - 1e-12) & (listed + TWO_PI <= hi + 1e-12))
        ):
            failures.append(f"unlisted sign change of u' in [{lo:.6f}, {hi:.6f}]")

    min_d2 = float(min(d2)) if d2 else 0.0
    if not p.critical_points and not failures:
        failures.append("no critical points listed")
    return ProfileCertificate(
        name=p.name,
        passed=not failures,
        min_abs_d2u=min_d2,
        scan_points=scan_points,
        u1_tol=CRIT_U1_TOL,
        u2_min=CRIT_U2_MIN,
        failures=tuple(failures),
    )
