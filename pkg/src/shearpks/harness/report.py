"""Summary JSON and SVG plots for run and sweep directories."""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from functools import lru_cache
from importlib import resources
from xml.sax.saxutils import escape

import numpy as np

log = logging.getLogger(__name__)

W, H = 640, 420
PAD_L, PAD_R, PAD_T, PAD_B = 70, 20, 30, 50


@lru_cache(maxsize=1)
def load_schema() -> dict:
    text = resources.files("shearpks.harness").joinpath("summary.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


# ---------------------------------------------------------------------------
# tiny SVG writer


class _Axes:
    def __init__(self, xlo, xhi, ylo, yhi):
        if not xhi > xlo:
            xhi = xlo + 1.0
        if not yhi > ylo:
            yhi = ylo + 1.0
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi

    def px(self, x):
        return PAD_L + (x - self.xlo) / (self.xhi - self.xlo) * (W - PAD_L - PAD_R)

    def py(self, y):
        return H - PAD_B - (y - self.ylo) / (self.yhi - self.ylo) * (H - PAD_T - PAD_B)


def _frame(ax: _Axes, title: str, xlabel: str, ylabel: str) -> list[str]:
    x0, x1 = PAD_L, W - PAD_R
    y0, y1 = H - PAD_B, PAD_T
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f"<title>{escape(title)}</title>",
        '<rect x="0" y="0" width="100%" height="100%" fill="white"/>',
        f'<g class="axes" stroke="black" fill="none"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>',
    ]
    for i in range(5):
        fx = ax.xlo + (ax.xhi - ax.xlo) * i / 4
        fy = ax.ylo + (ax.yhi - ax.ylo) * i / 4
        out.append(f'<text class="tick" x="{ax.px(fx):.2f}" y="{y0 + 16}" font-size="11" text-anchor="middle">{fx:.4g}</text>')
        out.append(f'<text class="tick" x="{x0 - 6}" y="{ax.py(fy) + 4:.2f}" font-size="11" text-anchor="end">{fy:.4g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2}" y="{H - 12}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{(y0 + y1) / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2})">{escape(ylabel)}</text>'
    )
    out.append(f'<text x="{(x0 + x1) / 2}" y="18" font-size="14" text-anchor="middle">{escape(title)}</text>')
    return out


def _polyline(ax: _Axes, x, y, cls: str, color: str, extra: str = "") -> str:
    pts = " ".join(f"{ax.px(a):.2f},{ax.py(b):.2f}" for a, b in zip(x, y))
    return f'<polyline class="{cls}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"{extra}/>'


def _write(path: str, parts: list[str]) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts + ["</svg>"]) + "\n")
    return path


def decay_plot(path: str, tau, values, fit=None, label: str = "nonzero_l2_sq") -> str:
    """``log value`` against tau, with the fitted line when given.

    The overlay carries its data-space endpoints (natural log) in
    ``data-*`` attributes so the slope can be read back from the markup.
    """
    tau = np.asarray(tau, float)
    lv = np.log(np.asarray(values, float))
    ok = np.isfinite(lv)
    tau, lv = tau[ok], lv[ok]
    ax = _Axes(float(tau.min()), float(tau.max()), float(lv.min()), float(lv.max()))
    parts = _frame(ax, f"log {label}", "tau", f"ln {label}")
    parts.append(_polyline(ax, tau, lv, "series", "#1f4e79"))
    if fit is not None:
        x0, x1 = fit["t0"], fit["t1"]
        c = math.log(fit["amplitude"])
        y0, y1 = c - fit["rate"] * x0, c - fit["rate"] * x1
        extra = (
            f' data-rate="{fit["rate"]!r}" data-amplitude="{fit["amplitude"]!r}"'
            f' data-x0="{x0!r}" data-y0="{y0!r}" data-x1="{x1!r}" data-y1="{y1!r}"'
        )
        parts.append(_polyline(ax, [x0, x1], [y0, y1], "fit", "#c0392b", extra))
    return _write(path, parts)


def series_plot(path: str, tau, values, label: str) -> str:
    tau = np.asarray(tau, float)
    v = np.asarray(values, float)
    ok = np.isfinite(v)
    tau, v = tau[ok], v[ok]
    ax = _Axes(float(tau.min()), float(tau.max()), float(v.min()), float(v.max()))
    parts = _frame(ax, label, "tau", label)
    parts.append(_polyline(ax, tau, v, "series", "#1f4e79"))
    return _write(path, parts)


OUTCOME_COLORS = {"ok": "#2e7d32", "blowup_detected": "#c62828", "numerical_failure": "#6a1b9a"}


def phase_plot(path: str, rows: list[dict]) -> str:
    """Outcome of each sweep point on (log10 A, mass); one class per outcome."""
    la = np.log10([float(r["A"]) for r in rows])
    ms = np.array([float(r["mass"]) for r in rows])
    ax = _Axes(float(la.min()) - 0.25, float(la.max()) + 0.25, float(ms.min()) * 0.9, float(ms.max()) * 1.1)
    parts = _frame(ax, "sweep outcomes", "log10 A", "mass")
    for r, x, y in zip(rows, la, ms):
        o = str(r["outcome"])
        parts.append(
            f'<circle class="point outcome-{escape(o)}" cx="{ax.px(x):.2f}" cy="{ax.py(y):.2f}" r="6" '
            f'fill="{OUTCOME_COLORS.get(o, "gray")}" data-A="{float(r["A"])!r}" data-mass="{float(r["mass"])!r}" '
            f'data-outcome="{escape(o)}"/>'
        )
    for i, (o, c) in enumerate(OUTCOME_COLORS.items()):
        y = PAD_T + 14 * i + 10
        parts.append(f'<circle class="legend" cx="{W - 170}" cy="{y}" r="5" fill="{c}"/>')
        parts.append(f'<text class="legend" x="{W - 160}" y="{y + 4}" font-size="11">{o}</text>')
    return _write(path, parts)


# ---------------------------------------------------------------------------
# entry point


def _read_config_echo(run_dir: str) -> dict | None:
    p = os.path.join(run_dir, "config.txt")
    if not os.path.exists(p):
        return None
    out = {}
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                out[k] = v
    return out


def emit_report(run_dir: str, kinds=("summary_json", "svg_plots")) -> list[str]:
    """Write ``report.json`` and/or SVG plots for a run or sweep directory."""
    from .experiment import _fit_dict, fit_from_columns, read_csv, versions, write_json
    from .config import parse_window

    paths: list[str] = []
    sweep_csv = os.path.join(run_dir, "sweep.csv")
    plot_dir = os.path.join(run_dir, "plots")

    if os.path.exists(sweep_csv):
        with open(sweep_csv, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        if not lines:
            raise ValueError(f"{sweep_csv}: empty table")
        header = lines[0].split(",")
        rows = [dict(zip(header, ln.split(","))) for ln in lines[1:]]
        if "summary_json" in kinds:
            p = os.path.join(run_dir, "report.json")
            write_json(p, {"kind": "sweep", "points": rows, "config": _read_config_echo(run_dir), "versions": versions()})
            paths.append(p)
        if "svg_plots" in kinds and rows:
            os.makedirs(plot_dir, exist_ok=True)
            paths.append(phase_plot(os.path.join(plot_dir, "phase.svg"), rows))
        return paths

    csv_path = os.path.join(run_dir, "diagnostics.csv")
    if not os.path.exists(csv_path):
        raise FileNotFoundError(f"no diagnostics.csv or sweep.csv in {run_dir}")
    header, cols = read_csv(csv_path)
    if "tau" not in header:
        raise ValueError(f"{csv_path}: malformed CSV, no tau column")
    n = cols["tau"].size
    summary_path = os.path.join(run_dir, "summary.json")
    summary = None
    if os.path.exists(summary_path):
        with open(summary_path, encoding="utf-8") as fh:
            summary = json.load(fh)
    cfg = _read_config_echo(run_dir) or {}
    column = cfg.get("diagnostics.fit_column", "nonzero_l2_sq")
    window = parse_window(cfg.get("diagnostics.fit_window", "post_transient"))
    fit, err = (None, "no rows") if n == 0 else fit_from_columns(cols, column, window)
    fit_d = _fit_dict(fit, err) if fit is not None else None

    if "summary_json" in kinds:
        p = os.path.join(run_dir, "report.json")
        write_json(
            p,
            {
                "kind": "run",
                "outcome": summary["outcome"] if summary else None,
                "final_tau": summary["final_tau"] if summary else (float(cols["tau"][-1]) if n else None),
                "rows": n,
                "rate_fit": fit_d if fit_d else {"error": err},
                "config": cfg or None,
                "versions": versions(),
            },
        )
        paths.append(p)

    if "svg_plots" in kinds:
        if n == 0:
            warnings.warn(f"{csv_path} has no rows; no plots written", stacklevel=2)
            log.warning("%s has no rows; no plots written", csv_path)
            return paths
        os.makedirs(plot_dir, exist_ok=True)
        if column in cols:
            v = cols[column]
            ok = np.isfinite(v) & (v > 0)
            if ok.sum() >= 2:
                paths.append(decay_plot(os.path.join(plot_dir, "decay.svg"), cols["tau"][ok], v[ok], fit_d, column))
        for name in ("phi", "linf", "free_energy"):
            if name in cols and np.isfinite(cols[name]).sum() >= 2:
                paths.append(series_plot(os.path.join(plot_dir, f"{name}.svg"), cols["tau"], cols[name], name))
    return paths
