"""Flat ``section.key = value`` experiment configs.

Every key is declared in :data:`KEYS` with its type and default; parsing
materializes all of them, so nothing downstream consults a hidden default.
Floats accept ``pi`` multiples (``12*pi``, ``0.5pi``, ``pi``).  Lists are
comma separated.  ``#`` starts a comment.

The output root is ``output.root`` unless the ``PKS_OUTPUT_ROOT``
environment variable is set, in which case the variable wins.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass
from typing import Any, Callable

from ..diagnostics import HypoWeights
from ..profiles import make_profile, ShearProfile
from ..solver import KINDS, MODES, InitialCondition, SimParams
from ..spectral import Grid

OUTPUT_ROOT_ENV = "PKS_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


# ---------------------------------------------------------------------------
# value types

_PI_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*pi\s*$")


def _float(s: str) -> float:
    m = _PI_RE.match(s)
    if m:
        coef = float(m.group(1)) if m.group(1) else 1.0
        return coef * math.pi
    v = float(s)
    return v


def _int(s: str) -> int:
    f = float(s)
    if not f.is_integer():
        raise ValueError(f"{s!r} is not an integer")
    return int(f)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _list(conv):
    def parse(s: str):
        s = s.strip()
        if s in ("", "none", "[]"):
            return ()
        return tuple(conv(p.strip()) for p in s.strip("[]()").split(","))

    return parse


def _str(s: str) -> str:
    return s.strip().strip('"').strip("'")


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    default: Any  # value or callable(values) -> value
    help: str = ""


def _workers_default(_v):
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def default_dt(A: float) -> float:
    return 0.01 if A >= 100 else 1e-3


def _dt_default(v):
    return default_dt(v["sim.A"])


def _sizes_default(v):
    return (128, 128) if v["grid.dim"] == 2 else (64, 64, 64)


def _center_default(v):
    return (math.pi,) * len(v["grid.sizes"])


def _wavevector_default(v):
    return (1,) + (0,) * (len(v["grid.sizes"]) - 1)


_REQUIRED = object()

KEYS: tuple[Key, ...] = (
    Key("experiment.name", _str, "experiment", "run directory name under the output root"),
    Key("experiment.seed", _int, 0, "seed for every random choice"),
    Key("grid.dim", _int, 2, "2 or 3; implied by grid.sizes when given"),
    Key("grid.sizes", _list(_int), _sizes_default, "points per axis, x first"),
    Key("sim.A", _float, _REQUIRED, "shear amplitude (>= 1)"),
    Key("sim.dt", _float, _dt_default, "step in rescaled time"),
    Key("sim.t_max", _float, 20.0, "horizon in rescaled time"),
    Key("sim.equation_mode", _str, "full_pks", "|".join(MODES)),
    Key("sim.blowup_factor", _float, 1e6, "L^inf threshold as a multiple of ||n_in||_inf"),
    Key("sim.negativity_rtol", _float, 1e-8, "allowed min n as a fraction of ||n||_inf"),
    Key("sim.collapse_factor", _float, 2.0, "concentration needed to call a dt collapse a blow-up"),
    Key("sim.dealias", _bool, True, "3/2 zero padding of the chemotactic products"),
    Key("sim.max_halvings", _int, 2, "dt halvings tried before giving up on a step"),
    Key("init.kind", _str, "gaussian_blob", "|".join(KINDS)),
    Key("init.mass", _float, 4 * math.pi, "total mass over the torus"),
    Key("init.width", _float, 0.5, "blob standard deviation"),
    Key("init.center", _list(_float), _center_default, "blob center"),
    Key("init.floor_fraction", _float, 0.0, "floor q as a fraction of the mean density"),
    Key("init.mean", _float, 1.0, "mean for perturbation and Fourier-mode data"),
    Key("init.amplitude", _float, 0.1, "perturbation or mode amplitude"),
    Key("init.wavevector", _list(_int), _wavevector_default, "integer wavevector of fourier_mode data"),
    Key("profile.name", _str, "kolmogorov", "kolmogorov|multilayer|skewed|zero|constant|sin_cubed"),
    Key("profile.m", _int, 2, "layers of the multilayer profile"),
    Key("profile.a", _float, 0.3, "skew of the skewed profile"),
    Key("profile.value", _float, 1.0, "value of the constant profile"),
    Key("hypo.eps_alpha", _float, 0.04, ""),
    Key("hypo.eps_beta", _float, 0.01, ""),
    Key("hypo.eps_gamma", _float, 0.04, ""),
    Key("hypo.y_gradient", _str, "y1", "3D alpha-term derivative: y1 or full"),
    Key("diagnostics.stride", _int, 10, "steps between CSV rows"),
    Key("diagnostics.snapshot_stride", _int, 0, "steps between snapshots (0: first and last only)"),
    Key("diagnostics.fit_column", _str, "nonzero_l2_sq", "CSV column used for the rate fit"),
    Key("diagnostics.fit_window", _str, "post_transient", "post_transient, full or t0:t1"),
    Key("sweep.A", _list(_float), (), "A values of a sweep"),
    Key("sweep.mass", _list(_float), (), "mass values of a sweep"),
    Key("sweep.dt_policy", _str, "by_A", "by_A: default dt rule per point; fixed: sim.dt everywhere"),
    Key("sweep.workers", _int, _workers_default, "worker processes"),
    Key("output.root", _str, DEFAULT_OUTPUT_ROOT, "output root (PKS_OUTPUT_ROOT overrides)"),
    Key("inequalities.nash_size", _int, 200, ""),
    Key("inequalities.mode_size", _int, 50, ""),
    Key("inequalities.full_size", _int, 50, ""),
    Key("inequalities.hls_size", _int, 24, ""),
    Key("inequalities.hls_mass", _float, 4 * math.pi, ""),
    Key("inequalities.include_3d", _bool, True, ""),
)

KEY_INDEX = {k.name: k for k in KEYS}


# ---------------------------------------------------------------------------
# config object


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated key/value map with typed accessors."""

    values: tuple[tuple[str, Any], ...]

    def __getitem__(self, key: str) -> Any:
        return dict(self.values)[key]

    def as_dict(self) -> dict:
        return dict(self.values)

    def with_values(self, updates: dict) -> "ExperimentConfig":
        """Copy with some keys replaced, revalidated."""
        v = self.as_dict()
        for name, val in updates.items():
            if name not in KEY_INDEX:
                raise ConfigError(f"unknown key {name!r}")
            v[name] = val
        return _validated(v, {})

    # typed views ------------------------------------------------------------

    @property
    def grid(self) -> Grid:
        return Grid(self["grid.sizes"])

    @property
    def sim(self) -> SimParams:
        return SimParams(
            A=self["sim.A"],
            dt=self["sim.dt"],
            t_max=self["sim.t_max"],
            equation_mode=self["sim.equation_mode"],
            blowup_factor=self["sim.blowup_factor"],
            negativity_rtol=self["sim.negativity_rtol"],
            dealias=self["sim.dealias"],
            max_halvings=self["sim.max_halvings"],
            collapse_factor=self["sim.collapse_factor"],
        )

    @property
    def init(self) -> InitialCondition:
        return InitialCondition(
            kind=self["init.kind"],
            mass=self["init.mass"],
            width=self["init.width"],
            center=self["init.center"],
            floor_fraction=self["init.floor_fraction"],
            mean=self["init.mean"],
            amplitude=self["init.amplitude"],
            seed=self["experiment.seed"],
            wavevector=self["init.wavevector"],
        )

    @property
    def profile(self) -> ShearProfile:
        name = self["profile.name"]
        params = {}
        if name == "multilayer":
            params["m"] = self["profile.m"]
        elif name == "skewed":
            params["a"] = self["profile.a"]
        elif name == "constant":
            params["value"] = self["profile.value"]
        return make_profile(name, **params)

    @property
    def weights(self) -> HypoWeights:
        return HypoWeights(self["hypo.eps_alpha"], self["hypo.eps_beta"], self["hypo.eps_gamma"], self["sim.A"])

    @property
    def output_root(self) -> str:
        return os.environ.get(OUTPUT_ROOT_ENV) or self["output.root"]

    @property
    def run_dir(self) -> str:
        return os.path.join(self.output_root, self["experiment.name"])

    @property
    def is_sweep(self) -> bool:
        return bool(self["sweep.A"] or self["sweep.mass"])


# ---------------------------------------------------------------------------
# parse / serialize


def parse_config(text: str) -> ExperimentConfig:
    raw: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'section.key = value', got {body!r}", lineno)
        key, value = (p.strip() for p in body.split("=", 1))
        if key not in KEY_INDEX:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno)
        try:
            raw[key] = KEY_INDEX[key].parse(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno) from None
        lines[key] = lineno
    if "grid.sizes" in raw and "grid.dim" not in raw:
        raw["grid.dim"] = len(raw["grid.sizes"])
    return _validated(raw, lines)


def _validated(raw: dict, lines: dict) -> ExperimentConfig:
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", lines.get(key))

    v: dict[str, Any] = {}
    for k in KEYS:
        if k.name in raw:
            v[k.name] = raw[k.name]
        elif k.default is _REQUIRED:
            raise ConfigError(f"missing required key {k.name!r}")
        elif callable(k.default):
            v[k.name] = k.default(v)
        else:
            v[k.name] = k.default

    # normalize numeric types so round trips compare equal
    for k in KEYS:
        if k.parse is _float:
            v[k.name] = float(v[k.name])
        elif k.parse is _int:
            v[k.name] = int(v[k.name])
        elif isinstance(v[k.name], list):
            v[k.name] = tuple(v[k.name])

    if v["grid.dim"] not in (2, 3):
        fail("grid.dim", "must be 2 or 3")
    if len(v["grid.sizes"]) != v["grid.dim"]:
        fail("grid.sizes", f"needs {v['grid.dim']} entries for grid.dim = {v['grid.dim']}")
    try:
        Grid(v["grid.sizes"])
    except ValueError as exc:
        fail("grid.sizes", str(exc))

    sim_keys = [k.name for k in KEYS if k.name.startswith("sim.")]
    try:
        SimParams(
            A=v["sim.A"],
            dt=v["sim.dt"],
            t_max=v["sim.t_max"],
            equation_mode=v["sim.equation_mode"],
            blowup_factor=v["sim.blowup_factor"],
            negativity_rtol=v["sim.negativity_rtol"],
            dealias=v["sim.dealias"],
            max_halvings=v["sim.max_halvings"],
            collapse_factor=v["sim.collapse_factor"],
        )
    except ValueError as exc:
        key = next((k for k in sim_keys if k.split(".")[1] in str(exc)), "sim.A")
        fail(key, str(exc))

    if v["init.kind"] not in KINDS:
        fail("init.kind", f"must be one of {KINDS}")
    if len(v["init.center"]) != v["grid.dim"]:
        fail("init.center", f"needs {v['grid.dim']} coordinates")
    if len(v["init.wavevector"]) != v["grid.dim"]:
        fail("init.wavevector", f"needs {v['grid.dim']} components")
    if not v["init.mass"] > 0:
        fail("init.mass", "must be positive")
    if not v["init.width"] > 0:
        fail("init.width", "must be positive")
    if not 0 <= v["init.floor_fraction"] < 1:
        fail("init.floor_fraction", "must lie in [0, 1)")

    try:
        make_profile(
            v["profile.name"],
            **{"m": v["profile.m"], "a": v["profile.a"], "value": v["profile.value"]}
            if v["profile.name"] in ("multilayer", "skewed", "constant")
            else {},
        )
    except ValueError as exc:
        fail("profile.name", str(exc))

    try:
        w = HypoWeights(v["hypo.eps_alpha"], v["hypo.eps_beta"], v["hypo.eps_gamma"], v["sim.A"])
    except ValueError as exc:
        fail("hypo.eps_beta", str(exc))
    if not w.constraint_ok:
        key = next((k for k in ("hypo.eps_beta", "hypo.eps_alpha", "hypo.eps_gamma") if k in lines), "hypo.eps_beta")
        fail(
            key,
            f"violates 8 eps_beta^2 <= eps_alpha eps_gamma "
            f"({8 * w.eps_beta**2:.4g} > {w.eps_alpha * w.eps_gamma:.4g})",
        )
    if v["hypo.y_gradient"] not in ("y1", "full"):
        fail("hypo.y_gradient", "must be y1 or full")

    if v["diagnostics.stride"] < 1:
        fail("diagnostics.stride", "must be >= 1")
    if v["diagnostics.snapshot_stride"] < 0:
        fail("diagnostics.snapshot_stride", "must be >= 0")
    try:
        parse_window(v["diagnostics.fit_window"])
    except ValueError as exc:
        fail("diagnostics.fit_window", str(exc))
    for a in v["sweep.A"]:
        if not a >= 1:
            fail("sweep.A", f"every A must be >= 1, got {a}")
    for m in v["sweep.mass"]:
        if not m > 0:
            fail("sweep.mass", f"every mass must be positive, got {m}")
    if v["sweep.dt_policy"] not in ("by_A", "fixed"):
        fail("sweep.dt_policy", "must be by_A or fixed")
    if v["sweep.workers"] < 1:
        fail("sweep.workers", "must be >= 1")
    if not v["experiment.name"] or "/" in v["experiment.name"] or v["experiment.name"] in (".", ".."):
        fail("experiment.name", "must be a plain directory name")
    if not 0 < v["inequalities.hls_mass"] < 8 * math.pi:
        fail("inequalities.hls_mass", "must lie in (0, 8 pi)")
    for k in ("inequalities.nash_size", "inequalities.mode_size", "inequalities.full_size", "inequalities.hls_size"):
        if v[k] < 1:
            fail(k, "must be >= 1")

    return ExperimentConfig(tuple((k.name, v[k.name]) for k in KEYS))


def parse_window(s: str):
    s = s.strip()
    if s in ("post_transient", "full"):
        return s
    if ":" in s:
        a, b = s.split(":", 1)
        lo, hi = float(a), float(b)
        if not lo < hi:
            raise ValueError("window needs t0 < t1")
        return (lo, hi)
    raise ValueError(f"unknown fit window {s!r}")


def serialize_config(cfg: ExperimentConfig) -> str:
    out = []
    section = None
    for name, value in cfg.values:
        sec = name.split(".", 1)[0]
        if sec != section:
            if section is not None:
                out.append("")
            section = sec
        out.append(f"{name} = {_fmt(value)}")
    return "\n".join(out) + "\n"


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
