import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from shearpks.profiles import make_profile
from shearpks.solver import (
    BLOWUP,
    FAILURE,
    OK,
    InitialCondition,
    PKSSolver,
    SimParams,
    SimState,
    detect_blowup,
    make_initial_condition,
    run,
)
from shearpks.spectral import Grid, RealField

KOLMO = make_profile("kolmogorov")


def mode_field(grid, k, mean=0.0, amp=1.0):
    x = grid.mesh()
    return RealField(grid, mean + amp * np.cos(sum(kk * xx for kk, xx in zip(k, x))))


# --- parameters and initial data ------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [dict(A=0.5), dict(dt=0), dict(t_max=-1), dict(equation_mode="heat"), dict(blowup_factor=1), dict(collapse_factor=0.5)],
)
def test_params_validation(kw):
    base = dict(A=1.0, dt=0.1, t_max=1.0)
    with pytest.raises(ValueError):
        SimParams(**{**base, **kw})


def test_blob_mass_is_exact_and_positive():
    g = Grid((32, 32))
    for floor in (0.0, 0.1):
        n = make_initial_condition(InitialCondition(mass=12 * math.pi, width=0.8, floor_fraction=floor), g)
        assert n.integral() == pytest.approx(12 * math.pi, rel=1e-12)
        assert n.values.min() > 0
    n = make_initial_condition(InitialCondition(mass=12 * math.pi, width=0.8, floor_fraction=0.1), g)
    assert n.values.min() >= 0.1 * 12 * math.pi / (2 * math.pi) ** 2


def test_blob_wraps_periodically():
    g = Grid((32, 32))
    n = make_initial_condition(InitialCondition(width=0.8, center=(0.0, 0.0)), g).values
    assert n[1, 0] == pytest.approx(n[-1, 0], rel=1e-12)
    assert n[0, 3] == pytest.approx(n[0, -3], rel=1e-12)


def test_unresolvable_blob_rejected():
    with pytest.raises(ValueError, match="not resolvable"):
        make_initial_condition(InitialCondition(width=0.1), Grid((32, 32)))


def test_x_independent_data():
    g = Grid((8, 16, 16))
    n = make_initial_condition(InitialCondition(kind="x_independent", mass=5.0, width=1.6), g)
    assert np.ptp(n.values, axis=0).max() == 0
    assert n.integral() == pytest.approx(5.0, rel=1e-12)


def test_perturbation_and_mode_data():
    g = Grid((16, 16))
    n = make_initial_condition(InitialCondition(kind="uniform_plus_perturbation", mean=2.0, amplitude=0.5, seed=3), g)
    assert n.values.min() >= 1.0 - 1e-12 and n.values.max() <= 3.0 + 1e-12
    assert n.integral() == pytest.approx(2.0 * (2 * math.pi) ** 2, rel=1e-12)
    m = make_initial_condition(InitialCondition(kind="fourier_mode", mean=1.0, amplitude=0.3, wavevector=(1, 2)), g)
    assert np.allclose(m.values, mode_field(g, (1, 2), 1.0, 0.3).values)
    with pytest.raises(ValueError):
        make_initial_condition(InitialCondition(kind="fourier_mode", wavevector=(1,)), g)
    with pytest.raises(ValueError):
        make_initial_condition(InitialCondition(kind="ring"), g)


# --- classification ----------------------------------------------------------


def test_detect_blowup_cases():
    g = Grid((8, 8))
    p = SimParams(A=1, dt=0.1, t_max=1)
    ones = np.ones(g.shape)
    assert detect_blowup(SimState(g, 0, ones), p, 1.0).status == OK
    bad = ones.copy()
    bad[2, 2] = np.nan
    assert detect_blowup(SimState(g, 0, bad), p, 1.0).reason == "non_finite"
    big = ones.copy()
    big[0, 0] = 2e6
    assert detect_blowup(SimState(g, 0, big), p, 1.0).status == BLOWUP
    neg = ones.copy()
    neg[1, 1] = -1e-6
    assert detect_blowup(SimState(g, 0, neg), p, 1.0).status == FAILURE
    passive = SimParams(A=1, dt=0.1, t_max=1, equation_mode="passive_scalar")
    assert detect_blowup(SimState(g, 0, neg), passive, 1.0).status == OK


# --- exact solutions --------------------------------------------------------


def test_heat_kernel_without_shear():
    g = Grid((16, 16))
    p = SimParams(A=100.0, dt=0.37, t_max=37.0, equation_mode="passive_scalar")
    res = run(p, mode_field(g, (1, 2)), make_profile("zero"))
    expect = math.exp(-5 * res.final_tau / 100.0)
    assert np.max(np.abs(res.final_state.n - expect * mode_field(g, (1, 2)).values)) < 1e-13


def test_shear_advection_is_exact_at_large_A():
    # diffusion is O(1/A): f = cos(x - u(y) tau) up to 1e-12
    g = Grid((16, 64))
    p = SimParams(A=1e12, dt=0.25, t_max=3.0, equation_mode="passive_scalar")
    res = run(p, mode_field(g, (1, 0)), KOLMO)
    x, y = g.mesh()
    expect = np.cos(x - np.sin(y) * res.final_tau)
    assert np.max(np.abs(res.final_state.n - expect)) < 1e-10


def test_x_independent_data_ignores_shear():
    g = Grid((8, 32))
    f = mode_field(g, (0, 3), 1.0, 0.5)
    p = SimParams(A=10.0, dt=0.1, t_max=2.0, equation_mode="passive_scalar")
    a = run(p, f, KOLMO).final_state.n
    b = run(p, f, make_profile("zero")).final_state.n
    assert np.max(np.abs(a - b)) < 1e-14


def test_uniform_state_is_steady():
    g = Grid((16, 16))
    res = run(SimParams(A=3.0, dt=0.05, t_max=1.0), RealField(g, np.full(g.shape, 2.0)), KOLMO)
    assert res.outcome == OK
    assert np.max(np.abs(res.final_state.n - 2.0)) < 1e-14


# --- conservation and accuracy ---------------------------------------------


def test_subcritical_blob_conserves_mass():
    g = Grid((32, 32))
    n0 = make_initial_condition(InitialCondition(mass=4 * math.pi, width=0.8), g)
    res = run(SimParams(A=10.0, dt=0.01, t_max=2.0), n0, KOLMO)
    assert res.outcome == OK
    assert res.mass_drift < 1e-12
    assert res.final_state.n.min() >= -1e-8 * res.final_state.n.max()


def test_strang_splitting_is_second_order():
    g = Grid((32, 32))
    n0 = make_initial_condition(InitialCondition(mass=6 * math.pi, width=0.8), g)

    def final(dt):
        return run(SimParams(A=5.0, dt=dt, t_max=1.0), n0, KOLMO).final_state.n

    ref = final(0.1 / 32)
    errs = [np.max(np.abs(final(dt) - ref)) for dt in (0.1, 0.05, 0.025)]
    slopes = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.7 <= s <= 2.3 for s in slopes), slopes


def test_observers_and_stride():
    g = Grid((16, 16))
    seen = []
    run(SimParams(A=1.0, dt=0.1, t_max=1.05), mode_field(g, (1, 1), 1.0, 0.1), KOLMO, [lambda s: seen.append(s.step)], stride=4)
    assert seen == [0, 4, 8, 10]


def test_supercritical_collapse_detected_before_nan():
    g = Grid((128, 128))
    n0 = make_initial_condition(InitialCondition(mass=12 * math.pi, width=0.5), g)
    res = run(SimParams(A=1.0, dt=1e-3, t_max=1.0, equation_mode="no_advection_pks"), n0)
    assert res.outcome == BLOWUP
    assert np.isfinite(res.final_state.n).all()
    assert res.peak_linf > 2 * res.initial_linf


def test_under_resolved_collapse_is_a_numerical_failure():
    g = Grid((64, 64))
    n0 = make_initial_condition(InitialCondition(mass=12 * math.pi, width=0.5), g)
    res = run(SimParams(A=1.0, dt=1e-3, t_max=1.0, equation_mode="no_advection_pks"), n0)
    assert res.outcome == FAILURE and res.reason == "negativity"


def test_three_d_matches_two_d_on_x_independent_data():
    g3 = Grid((8, 16, 16))
    n3 = make_initial_condition(InitialCondition(kind="x_independent", mass=2 * math.pi * 4 * math.pi, width=1.6), g3)
    n2 = RealField(Grid((16, 16)), n3.values[0])
    p3 = SimParams(A=2.0, dt=0.02, t_max=0.5)
    p2 = SimParams(A=2.0, dt=0.02, t_max=0.5, equation_mode="no_advection_pks")
    a = run(p3, n3, KOLMO).final_state.n
    b = run(p2, n2).final_state.n
    assert np.max(np.abs(a - b[None])) < 1e-12


def test_solver_step_reports_substeps():
    g = Grid((16, 16))
    s = PKSSolver(g, SimParams(A=1.0, dt=0.1, t_max=1.0), KOLMO)
    st = SimState(g, 0.0, np.ones(g.shape), 0, 1.0)
    new, rep = s.step(st, 1.0)
    assert rep.status == OK and rep.substeps == 1 and new.step == 1


_BACKEND_SCRIPT = """
import json, math, numpy as np
from shearpks import _kernels
from shearpks.profiles import make_profile
from shearpks.solver import InitialCondition, SimParams, make_initial_condition, run
from shearpks.spectral import Grid
n0 = make_initial_condition(InitialCondition(mass=6 * math.pi, width=0.8), Grid((32, 32)))
r = run(SimParams(A=5.0, dt=0.05, t_max=1.0), n0, make_profile("kolmogorov"))
print(json.dumps([_kernels.backend(), r.final_state.n.tobytes().hex()[:4000], r.peak_linf]))
"""


def test_numba_and_numpy_backends_agree():
    out = {}
    for flag in ("0", "1"):
        env = {**os.environ, "SHEARPKS_DISABLE_NUMBA": flag}
        res = subprocess.run([sys.executable, "-c", _BACKEND_SCRIPT], env=env, capture_output=True, text=True, check=True)
        backend, head, peak = json.loads(res.stdout)
        out[backend] = (head, peak)
    assert set(out) == {"numba", "numpy"}
    assert out["numba"] == out["numpy"]
