"""Run orchestration: single experiments, sweeps and the 3D-vs-2D comparison."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__, _kernels
from ..diagnostics import (
    RateFit,
    fit_decay_rate,
    free_energy_record,
    norm_suite,
    phi_energy,
)
from ..profiles import validate_profile
from ..solver import OK, RunSummary, SimParams, SimState, make_initial_condition, run
from ..spectral import Grid, RealField
from .config import ExperimentConfig, default_dt, parse_config, parse_window, serialize_config
from .snapshot import write_snapshot

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

COLUMNS = (
    "tau",
    "mass",
    "l2",
    "linf",
    "nonzero_l2",
    "nonzero_l2_sq",
    "grad_nonzero_l2",
    "zero_dev_l2",
    "dy_zero_l2",
    "phi",
    "free_energy",
    "zero_mode_free_energy",
    "free_energy_gamma",
    "entropy_plus",
    "min_n",
    "envelope",
)

SWEEP_COLUMNS = (
    "index",
    "A",
    "mass",
    "outcome",
    "reason",
    "final_tau",
    "steps",
    "peak_linf",
    "peak_ratio",
    "rate",
    "rate_reliable",
    "run_dir",
)

ENVELOPE_RTOL = 1e-6


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


# ---------------------------------------------------------------------------
# diagnostics observer


class DiagnosticsRecorder:
    """Observer that turns states into CSV rows every ``stride`` steps."""

    def __init__(self, cfg: ExperimentConfig, init: RealField, stride: int):
        self.cfg = cfg
        self.profile = cfg.profile
        self.weights = cfg.weights
        self.stride = stride
        self.A = cfg["sim.A"]
        self.nbar = init.integral() / init.grid.volume
        self.q = float(np.min(init.values))
        self.rows: list[tuple] = []
        self.last_step = -1
        self.last_state: SimState | None = None

    def envelope(self, tau: float) -> float:
        if self.q <= 0:
            return math.nan
        return self.q * math.exp(-self.nbar * tau / self.A)

    def row(self, state: SimState) -> tuple:
        f = RealField(state.grid, state.n)
        nr = norm_suite(f)
        phi = phi_energy(f, self.profile, self.weights, state.tau, y_gradient=self.cfg["hypo.y_gradient"])
        fe = free_energy_record(f, state.tau)
        return (
            state.tau,
            nr.mass,
            nr.l2,
            nr.linf,
            nr.nonzero_l2,
            nr.nonzero_l2_sq,
            nr.grad_nonzero_l2,
            nr.zero_dev_l2,
            nr.dy_zero_l2,
            phi.total,
            fe.F,
            fe.zero_mode_F,
            fe.F_gamma,
            fe.entropy_plus,
            float(np.min(state.n)),
            self.envelope(state.tau),
        )

    def record(self, state: SimState) -> None:
        if state.step == self.last_step:
            return
        self.rows.append(self.row(state))
        self.last_step = state.step
        self.last_state = state

    def __call__(self, state: SimState) -> None:
        if state.step % self.stride == 0:
            self.record(state)


class SnapshotWriter:
    def __init__(self, directory: str, stride: int):
        self.dir = directory
        self.stride = stride
        self.paths: list[str] = []
        self.last_step = -1

    def write(self, state: SimState) -> None:
        if state.step == self.last_step:
            return
        os.makedirs(self.dir, exist_ok=True)
        path = os.path.join(self.dir, f"snap_{state.step:08d}.pks")
        write_snapshot(state, path)
        self.paths.append(path)
        self.last_step = state.step

    def __call__(self, state: SimState) -> None:
        if state.step == 0 or (self.stride and state.step % self.stride == 0):
            self.write(state)


# ---------------------------------------------------------------------------
# artifacts


@dataclass
class RunArtifacts:
    run_dir: str
    csv_path: str
    snapshot_paths: list[str]
    summary_path: str
    plot_paths: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def outcome(self) -> str:
        return self.summary["outcome"]


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path: str, columns, rows) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")
    os.replace(tmp, path)


def read_csv(path: str) -> tuple[list[str], dict[str, np.ndarray]]:
    """Numeric CSV as column arrays (non-numeric cells become NaN)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty CSV (no header)")
    header = lines[0].split(",")
    cols: dict[str, list[float]] = {h: [] for h in header}
    for i, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}:{i}: expected {len(header)} cells, got {len(cells)}")
        for h, c in zip(header, cells):
            try:
                cols[h].append(float(c))
            except ValueError:
                cols[h].append(math.nan)
    return header, {h: np.asarray(v, dtype=float) for h, v in cols.items()}


def versions() -> dict:
    import numba

    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "kernel_backend": _kernels.backend(),
        "platform": sys.platform,
    }


def _fit_dict(fit: RateFit | None, error: str | None) -> dict | None:
    if fit is None:
        return {"error": error} if error else None
    d = asdict(fit)
    d["notes"] = list(fit.notes)
    return d


def fit_from_columns(cols: dict, column: str, window) -> tuple[RateFit | None, str | None]:
    if column not in cols:
        return None, f"column {column!r} not in CSV"
    t, v = cols["tau"], cols[column]
    ok = np.isfinite(v) & (v > 0)
    # positive prefix only: a series that hits zero has nothing more to fit
    if not ok.all():
        stop = int(np.argmin(ok))
        t, v = t[:stop], v[:stop]
    try:
        return fit_decay_rate(t, v, window=window, series=column), None
    except ValueError as exc:
        return None, str(exc)


def _summary(
    cfg: ExperimentConfig,
    res: RunSummary,
    rec: DiagnosticsRecorder,
    cols: dict,
    files: dict,
) -> dict:
    cert = validate_profile(cfg.profile)
    fit, err = fit_from_columns(cols, cfg["diagnostics.fit_column"], parse_window(cfg["diagnostics.fit_window"]))
    env = cols.get("envelope", np.array([]))
    mins = cols.get("min_n", np.array([]))
    if rec.q > 0 and env.size:
        viol = int(np.sum(mins < env * (1 - ENVELOPE_RTOL)))
        margin = float(np.min(mins / env - 1.0))
    else:
        viol, margin = None, None
    return {
        "schema_version": SCHEMA_VERSION,
        "name": cfg["experiment.name"],
        "outcome": res.outcome,
        "reason": res.reason,
        "final_tau": res.final_tau,
        "final_t": res.final_tau / cfg["sim.A"],
        "steps": res.steps,
        "A": cfg["sim.A"],
        "dim": cfg.grid.dim,
        "grid": list(cfg.grid.sizes),
        "equation_mode": cfg["sim.equation_mode"],
        "peak_linf": res.peak_linf,
        "initial_linf": res.initial_linf,
        "peak_ratio": res.peak_linf / res.initial_linf if res.initial_linf else None,
        "linf_threshold": res.linf_threshold,
        "mass_initial": res.mass_initial,
        "mass_final": res.mass_final,
        "mass_drift": res.mass_drift,
        "wall_time": res.wall_time,
        "rows": int(len(rec.rows)),
        "rate_fit": _fit_dict(fit, err),
        "lower_bound": {
            "q": rec.q,
            "nbar": rec.nbar,
            "violations": viol,
            "min_relative_margin": margin,
            "rtol": ENVELOPE_RTOL,
        },
        "profile_certificate": {
            "name": cert.name,
            "passed": cert.passed,
            "min_abs_d2u": cert.min_abs_d2u,
            "failures": list(cert.failures),
        },
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.values},
        "versions": versions(),
        "checksums": files,
    }


def validate_summary(summary: dict) -> None:
    import jsonschema

    from .report import load_schema

    jsonschema.validate(summary, load_schema())


def write_json(path: str, obj) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    os.replace(tmp, path)


def run_experiment(cfg: ExperimentConfig, run_dir: str | None = None, plots: bool = True) -> RunArtifacts:
    """Run one configured simulation and write CSV, snapshots and summary."""
    run_dir = run_dir or cfg.run_dir
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))

    cert = validate_profile(cfg.profile)
    if not cert.passed and cfg["sim.equation_mode"] != "no_advection_pks":
        log.warning("profile %s fails the critical-point check: %s", cert.name, "; ".join(cert.failures))

    grid = cfg.grid
    init = make_initial_condition(cfg.init, grid)
    rec = DiagnosticsRecorder(cfg, init, cfg["diagnostics.stride"])
    snaps = SnapshotWriter(os.path.join(run_dir, "snapshots"), cfg["diagnostics.snapshot_stride"])
    res = run(cfg.sim, init, cfg.profile, observers=[rec, snaps], stride=1)
    # the last admissible state closes the record
    if rec.last_state is not None and res.outcome == OK:
        rec.record(res.final_state)
        snaps.write(res.final_state)
    elif rec.last_state is not None:
        snaps.write(rec.last_state)

    csv_path = os.path.join(run_dir, "diagnostics.csv")
    write_csv(csv_path, COLUMNS, rec.rows)
    _, cols = read_csv(csv_path)
    files = {"diagnostics.csv": sha256_file(csv_path)}
    for p in snaps.paths:
        files[os.path.relpath(p, run_dir)] = sha256_file(p)
    summary = _summary(cfg, res, rec, cols, files)
    validate_summary(summary)
    summary_path = os.path.join(run_dir, "summary.json")
    write_json(summary_path, summary)

    art = RunArtifacts(run_dir, csv_path, list(snaps.paths), summary_path, [], summary)
    if plots:
        from .report import emit_report

        art.plot_paths = emit_report(run_dir, ("svg_plots",))
    log.info("%s: %s at tau=%.6g (%d steps)", cfg["experiment.name"], res.outcome, res.final_tau, res.steps)
    return art


# ---------------------------------------------------------------------------
# sweeps


def sweep_points(cfg: ExperimentConfig) -> list[tuple[float, float]]:
    As = cfg["sweep.A"] or (cfg["sim.A"],)
    Ms = cfg["sweep.mass"] or (cfg["init.mass"],)
    return [(float(a), float(m)) for a, m in itertools.product(As, Ms)]


def point_config(cfg: ExperimentConfig, A: float, mass: float) -> ExperimentConfig:
    upd = {"sim.A": A, "init.mass": mass, "sweep.A": (), "sweep.mass": ()}
    if cfg["sweep.dt_policy"] == "by_A":
        upd["sim.dt"] = default_dt(A)
    return cfg.with_values(upd)


def point_dir(root: str, index: int, A: float, mass: float) -> str:
    return os.path.join(root, f"point_{index:03d}_A{A:.6g}_M{mass:.6g}")


def _run_point(args) -> dict:
    text, run_dir = args
    cfg = parse_config(text)
    art = run_experiment(cfg, run_dir, plots=False)
    s = art.summary
    fit = s.get("rate_fit") or {}
    return {
        "A": cfg["sim.A"],
        "mass": cfg["init.mass"],
        "outcome": s["outcome"],
        "reason": s["reason"],
        "final_tau": s["final_tau"],
        "steps": s["steps"],
        "peak_linf": s["peak_linf"],
        "peak_ratio": s["peak_ratio"],
        "rate": fit.get("rate", math.nan),
        "rate_reliable": bool(fit.get("reliable", False)),
    }


@dataclass
class SweepResult:
    run_dir: str
    table_path: str
    rows: list[dict]
    plot_paths: list[str] = field(default_factory=list)


def sweep(cfg: ExperimentConfig, run_dir: str | None = None, workers: int | None = None, plots: bool = True) -> SweepResult:
    """One run per (A, mass) point; rows come back in point order whatever the worker count."""
    run_dir = run_dir or cfg.run_dir
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))
    pts = sweep_points(cfg)
    jobs = []
    for i, (A, M) in enumerate(pts):
        pc = point_config(cfg, A, M)
        jobs.append((serialize_config(pc), point_dir(run_dir, i, A, M)))
    nworkers = min(workers or cfg["sweep.workers"], len(jobs))
    if nworkers <= 1:
        results = [_run_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as ex:
            results = list(ex.map(_run_point, jobs))
    rows = []
    for i, (r, (_, d)) in enumerate(zip(results, jobs)):
        rows.append({"index": i, **r, "run_dir": os.path.relpath(d, run_dir)})
    table = os.path.join(run_dir, "sweep.csv")
    write_csv(table, SWEEP_COLUMNS, [tuple(r[c] for c in SWEEP_COLUMNS) for r in rows])
    out = SweepResult(run_dir, table, rows)
    if plots:
        from .report import emit_report

        out.plot_paths = emit_report(run_dir, ("svg_plots",))
    return out


# ---------------------------------------------------------------------------
# dimensional reduction


@dataclass
class ReductionReport:
    max_discrepancy: float
    times_compared: int
    outcome_3d: str
    outcome_2d: str
    final_tau_3d: float
    final_tau_2d: float
    dt: float
    per_time: list[tuple[float, float]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_time"] = [list(p) for p in self.per_time]
        return d


class _Keeper:
    def __init__(self, stride: int):
        self.stride = stride
        self.states: dict[int, SimState] = {}

    def __call__(self, s: SimState) -> None:
        if s.step % self.stride == 0:
            self.states[s.step] = s


def compare_dimensional_reduction(cfg: ExperimentConfig, run_dir: str | None = None) -> ReductionReport:
    """Run a 3D x-independent configuration and the 2D solver on its y-slice.

    The 2D run uses the same A and dt without advection: shear cannot act
    on data that does not depend on x.
    """
    grid = cfg.grid
    if grid.dim != 3:
        raise ValueError("dimensional reduction needs a 3D configuration")
    init3 = make_initial_condition(cfg.init, grid)
    spread = float(np.max(np.abs(init3.values - init3.values.mean(axis=0, keepdims=True))))
    if spread > 1e-14 * max(1.0, float(np.max(np.abs(init3.values)))):
        raise ValueError(f"initial data depends on x (max deviation {spread:.3e}); reduction needs x-independent data")
    g2 = Grid(grid.sizes[1:])
    init2 = RealField(g2, init3.values[0])
    p3 = cfg.sim
    p2 = SimParams(
        A=p3.A,
        dt=p3.dt,
        t_max=p3.t_max,
        equation_mode="no_advection_pks" if p3.equation_mode != "passive_scalar" else "passive_scalar",
        blowup_factor=p3.blowup_factor,
        negativity_rtol=p3.negativity_rtol,
        dealias=p3.dealias,
        max_halvings=p3.max_halvings,
        collapse_factor=p3.collapse_factor,
    )
    stride = cfg["diagnostics.stride"]
    k3, k2 = _Keeper(stride), _Keeper(stride)
    r3 = run(p3, init3, cfg.profile, [k3], stride=1)
    r2 = run(p2, init2, None, [k2], stride=1)
    k3.states[r3.final_state.step] = r3.final_state
    k2.states[r2.final_state.step] = r2.final_state
    per_time = []
    worst = 0.0
    for step in sorted(set(k3.states) & set(k2.states)):
        a, b = k3.states[step], k2.states[step]
        if not (np.isfinite(a.n).all() and np.isfinite(b.n).all()):
            continue
        d = float(np.max(np.abs(a.n - b.n[None, ...])))
        per_time.append((a.tau, d))
        worst = max(worst, d)
    rep = ReductionReport(
        max_discrepancy=worst,
        times_compared=len(per_time),
        outcome_3d=r3.outcome,
        outcome_2d=r2.outcome,
        final_tau_3d=r3.final_tau,
        final_tau_2d=r2.final_tau,
        dt=p3.dt,
        per_time=per_time,
    )
    out = run_dir or cfg.run_dir
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "reduction.json"), rep.to_dict())
    return rep


# ---------------------------------------------------------------------------
# inequality checks


def verify_inequalities(cfg: ExperimentConfig, run_dir: str | None = None) -> list:
    from .. import inequalities as ineq

    seed = cfg["experiment.seed"]
    reports = [ineq.nash_ratio_1d(seed=seed, size=cfg["inequalities.nash_size"])]
    reports.extend(ineq.mode_elliptic_ratios_2d(seed=seed, size=cfg["inequalities.mode_size"]))
    reports.extend(ineq.full_elliptic_ratios(2, seed=seed, size=cfg["inequalities.full_size"]))
    if cfg["inequalities.include_3d"]:
        reports.extend(ineq.full_elliptic_ratios(3, seed=seed, size=cfg["inequalities.full_size"]))
    reports.append(
        ineq.log_hls_deficit(seed=seed, size=cfg["inequalities.hls_size"], mass=cfg["inequalities.hls_mass"])
    )
    out = os.path.join(run_dir or cfg.run_dir, "inequalities")
    os.makedirs(out, exist_ok=True)
    for r in reports:
        write_json(os.path.join(out, f"{r.name}.json"), r.to_dict())
    return reports
