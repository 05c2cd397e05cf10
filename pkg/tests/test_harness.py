import json
import math
import os
import re

import jsonschema
import numpy as np
import pytest

from shearpks.harness import cli
from shearpks.harness.config import parse_config
from shearpks.harness.experiment import (
    COLUMNS,
    compare_dimensional_reduction,
    read_csv,
    run_experiment,
    sha256_file,
    sweep,
    write_csv,
)
from shearpks.harness.report import emit_report, load_schema
from shearpks.harness.snapshot import read_snapshot


def cfg(text):
    return parse_config(text)


UNIFORM = """
experiment.name = uniform
grid.sizes = 16, 16
sim.A = 10
sim.dt = 0.1
sim.t_max = 2
init.kind = fourier_mode
init.amplitude = 0
diagnostics.stride = 5
"""

PASSIVE = """
experiment.name = passive
grid.sizes = 8, 64
sim.A = 100
sim.dt = 0.05
sim.t_max = 80
sim.equation_mode = passive_scalar
init.kind = fourier_mode
init.wavevector = 1, 0
init.amplitude = 1
diagnostics.stride = 4
"""

BLOB = """
experiment.name = blob
grid.sizes = 32, 32
sim.A = 10
sim.dt = 0.01
sim.t_max = 0.5
init.mass = 4*pi
init.width = 0.8
init.floor_fraction = 0.1
diagnostics.stride = 5
diagnostics.snapshot_stride = 25
"""


def test_uniform_run_has_constant_rows(tmp_path):
    art = run_experiment(cfg(UNIFORM), str(tmp_path / "u"))
    assert art.outcome == "ok"
    header, cols = read_csv(art.csv_path)
    assert tuple(header) == COLUMNS
    assert cols["tau"].tolist() == [0.0, 0.5, 1.0, 1.5, 2.0]
    for name in ("mass", "l2", "linf", "phi", "free_energy"):
        assert np.ptp(cols[name]) <= 1e-13 * max(1.0, abs(cols[name][0])), name


def test_summary_is_schema_valid_and_checksummed(tmp_path):
    art = run_experiment(cfg(BLOB), str(tmp_path / "b"))
    with open(art.summary_path) as fh:
        s = json.load(fh)
    jsonschema.validate(s, load_schema())
    assert s["checksums"]["diagnostics.csv"] == sha256_file(art.csv_path)
    for p in art.snapshot_paths:
        assert s["checksums"][os.path.relpath(p, art.run_dir)] == sha256_file(p)
    assert [os.path.basename(p) for p in art.snapshot_paths] == [
        "snap_00000000.pks",
        "snap_00000025.pks",
        "snap_00000050.pks",
    ]
    last = read_snapshot(art.snapshot_paths[-1])
    assert last.tau == pytest.approx(0.5) and last.A == 10.0
    assert s["mass_drift"] < 1e-10
    assert s["lower_bound"]["violations"] == 0
    assert s["config"]["init.floor_fraction"] == 0.1
    assert art.plot_paths


def test_identical_configs_give_identical_bytes(tmp_path):
    a = run_experiment(cfg(BLOB), str(tmp_path / "a"), plots=False)
    b = run_experiment(cfg(BLOB), str(tmp_path / "b"), plots=False)
    with open(a.csv_path, "rb") as fa, open(b.csv_path, "rb") as fb:
        assert fa.read() == fb.read()


def test_passive_run_reports_a_rate(tmp_path):
    art = run_experiment(cfg(PASSIVE), str(tmp_path / "p"))
    fit = art.summary["rate_fit"]
    assert fit["series"] == "nonzero_l2_sq" and fit["rate"] > 2 / 100
    assert fit["samples"] >= 20


def test_supercritical_run_is_a_blowup_result(tmp_path):
    text = """
experiment.name = collapse
grid.sizes = 128, 128
sim.A = 1
sim.dt = 0.001
sim.t_max = 1
sim.equation_mode = no_advection_pks
init.mass = 12*pi
"""
    art = run_experiment(cfg(text), str(tmp_path / "c"), plots=False)
    assert art.outcome == "blowup_detected"
    assert 0 < art.summary["final_tau"] < 1


# --- sweeps ------------------------------------------------------------------

SWEEP = """
experiment.name = sw
grid.sizes = 16, 16
sim.A = 1
sim.dt = 0.02
sim.t_max = 0.4
init.width = 1.6
sweep.A = 1, 30
sweep.mass = 2*pi, 4*pi
sweep.dt_policy = fixed
diagnostics.stride = 2
"""


def _tree_bytes(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            if f.endswith(".csv") or f.endswith(".pks"):
                p = os.path.join(d, f)
                with open(p, "rb") as fh:
                    out[os.path.relpath(p, root)] = fh.read()
    return out


def test_sweep_serial_and_parallel_agree(tmp_path):
    c = cfg(SWEEP)
    s1 = sweep(c, str(tmp_path / "serial"), workers=1, plots=False)
    s2 = sweep(c, str(tmp_path / "pool"), workers=2, plots=False)
    assert [r["A"] for r in s1.rows] == [1.0, 1.0, 30.0, 30.0]
    assert _tree_bytes(s1.run_dir) == _tree_bytes(s2.run_dir)
    assert len(_tree_bytes(s1.run_dir)) > 4


def test_one_point_sweep_matches_a_single_run(tmp_path):
    one = cfg(SWEEP.replace("sweep.A = 1, 30", "sweep.A = 30").replace("sweep.mass = 2*pi, 4*pi", "sweep.mass = 2*pi"))
    res = sweep(one, str(tmp_path / "sw"), workers=1, plots=False)
    single = run_experiment(
        one.with_values({"sim.A": 30.0, "init.mass": 2 * math.pi, "sweep.A": (), "sweep.mass": ()}),
        str(tmp_path / "single"),
        plots=False,
    )
    point = os.path.join(res.run_dir, res.rows[0]["run_dir"], "diagnostics.csv")
    with open(point, "rb") as a, open(single.csv_path, "rb") as b:
        assert a.read() == b.read()


def test_sweep_phase_plot_marks_outcomes(tmp_path):
    text = SWEEP.replace("sweep.mass = 2*pi, 4*pi", "sweep.mass = 2*pi")
    res = sweep(cfg(text), str(tmp_path / "sw"), workers=1)
    svg = open(os.path.join(res.run_dir, "plots", "phase.svg")).read()
    assert svg.count('class="point outcome-ok"') == 2
    # fake a blow-up row and re-render
    table = os.path.join(res.run_dir, "sweep.csv")
    lines = open(table).read().splitlines()
    lines[2] = lines[2].replace(",ok,", ",blowup_detected,")
    open(table, "w").write("\n".join(lines) + "\n")
    emit_report(res.run_dir, ("svg_plots",))
    svg = open(os.path.join(res.run_dir, "plots", "phase.svg")).read()
    assert svg.count("outcome-blowup_detected") == 1 and svg.count('class="point outcome-ok"') == 1


# --- reports -----------------------------------------------------------------


def test_empty_run_gives_json_and_a_warning(tmp_path):
    d = tmp_path / "empty"
    d.mkdir()
    write_csv(str(d / "diagnostics.csv"), COLUMNS, [])
    with pytest.warns(UserWarning, match="no rows"):
        paths = emit_report(str(d))
    assert [os.path.basename(p) for p in paths] == ["report.json"]
    rep = json.load(open(paths[0]))
    assert rep["rows"] == 0 and rep["rate_fit"] == {"error": "no rows"}
    assert not (d / "plots").exists()


def test_overlay_slope_equals_synthetic_rate(tmp_path):
    d = tmp_path / "synthetic"
    d.mkdir()
    tau = np.linspace(0, 40, 161)
    rows = []
    for t in tau:
        r = [math.nan] * len(COLUMNS)
        r[COLUMNS.index("tau")] = t
        r[COLUMNS.index("nonzero_l2_sq")] = 2.5 * math.exp(-0.2345 * t)
        rows.append(r)
    write_csv(str(d / "diagnostics.csv"), COLUMNS, rows)
    emit_report(str(d))
    svg = open(d / "plots" / "decay.svg").read()
    attrs = dict(re.findall(r'data-(x0|y0|x1|y1|rate)="([^"]+)"', svg))
    slope = (float(attrs["y1"]) - float(attrs["y0"])) / (float(attrs["x1"]) - float(attrs["x0"]))
    assert -slope == pytest.approx(0.2345, rel=1e-6)
    assert float(attrs["rate"]) == pytest.approx(0.2345, rel=1e-6)


def test_malformed_csv_is_an_error(tmp_path):
    d = tmp_path / "bad"
    d.mkdir()
    (d / "diagnostics.csv").write_text("tau,mass\n1,2,3\n")
    with pytest.raises(ValueError):
        emit_report(str(d))
    (d / "diagnostics.csv").write_text("time,mass\n1,2\n")
    with pytest.raises(ValueError, match="tau"):
        emit_report(str(d))


# --- dimensional reduction --------------------------------------------------

RED = """
experiment.name = red
grid.sizes = 8, 32, 32
sim.A = 5
sim.dt = 0.01
sim.t_max = 0.5
init.kind = x_independent
init.mass = 78.95683520871486
init.width = 0.8
diagnostics.stride = 10
"""


def test_reduction_uniform_and_subcritical(tmp_path):
    uni = cfg(RED.replace("init.kind = x_independent", "init.kind = fourier_mode\ninit.amplitude = 0").replace("init.mass = 78.95683520871486\n", ""))
    assert compare_dimensional_reduction(uni, str(tmp_path / "u")).max_discrepancy <= 1e-13
    rep = compare_dimensional_reduction(cfg(RED.replace(f"{8*math.pi**2!r}", "16")), str(tmp_path / "s"))
    assert rep.outcome_3d == rep.outcome_2d == "ok"
    assert rep.max_discrepancy <= 1e-8 and rep.times_compared == 6
    assert os.path.exists(tmp_path / "s" / "reduction.json")


def test_reduction_rejects_x_dependent_data(tmp_path):
    with pytest.raises(ValueError, match="x-independent"):
        compare_dimensional_reduction(cfg(RED.replace("x_independent", "fourier_mode\ninit.wavevector = 1, 0, 1")), str(tmp_path))
    with pytest.raises(ValueError, match="3D"):
        compare_dimensional_reduction(cfg(BLOB), str(tmp_path))


def test_reduction_supercritical_blowup_times_agree(tmp_path):
    text = """
experiment.name = red_blow
grid.sizes = 8, 128, 128
sim.A = 1
sim.dt = 0.001
sim.t_max = 1
init.kind = x_independent
init.mass = 236.8705056261446
init.width = 0.5
"""
    rep = compare_dimensional_reduction(cfg(text), str(tmp_path))
    assert rep.outcome_3d == rep.outcome_2d == "blowup_detected"
    assert abs(rep.final_tau_3d - rep.final_tau_2d) <= 2 * 0.001


# --- command line ------------------------------------------------------------


def test_cli_simulate_fit_and_report(tmp_path, capsys):
    conf = tmp_path / "p.conf"
    conf.write_text(PASSIVE)
    assert cli.main(["simulate", str(conf)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["outcome"] == "ok"
    run_dir = out["run_dir"]
    assert run_dir.startswith(os.environ["PKS_OUTPUT_ROOT"])
    assert cli.main(["fit-rate", os.path.join(run_dir, "diagnostics.csv"), "--column", "nonzero_l2_sq"]) == 0
    fit = json.loads(capsys.readouterr().out)
    summary = json.load(open(os.path.join(run_dir, "summary.json")))
    assert fit["rate"] == summary["rate_fit"]["rate"]
    assert cli.main(["report", run_dir]) == 0
    assert "report.json" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("sim.A = 1\nsim.Q = 3\n")
    assert cli.main(["simulate", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["simulate", str(tmp_path / "missing.conf")]) == 2
    csv = tmp_path / "short.csv"
    csv.write_text("tau,v\n0,1\n1,0.5\n")
    assert cli.main(["fit-rate", str(csv), "--column", "v"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["fit-rate", str(csv)])


def test_cli_verify_inequalities(tmp_path, capsys):
    conf = tmp_path / "i.conf"
    conf.write_text(
        "experiment.name = ineq\nsim.A = 1\ninequalities.nash_size = 5\ninequalities.mode_size = 2\n"
        "inequalities.full_size = 3\ninequalities.hls_size = 2\ninequalities.include_3d = false\n"
    )
    assert cli.main(["verify-inequalities", str(conf), "--out", str(tmp_path / "o")]) == 0
    names = sorted(os.listdir(tmp_path / "o" / "inequalities"))
    assert names == sorted(
        f"{n}.json" for n in ("nash_1d", "mode_elliptic_2d", "zero_mode_elliptic_2d", "nonzero_elliptic_2d", "log_hls_t2")
    )
