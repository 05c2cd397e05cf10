import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from shearpks.diagnostics import (
    MIN_FIT_SAMPLES,
    HypoWeights,
    aligned_field,
    entropy_plus,
    envelope,
    extremal_sandwich_modes,
    fit_decay_rate,
    free_energy,
    free_energy_record,
    gamma,
    gamma_free_energy,
    min_bound_check,
    mode_field,
    norm_suite,
    phi_energy,
    phi_sandwich_check,
    post_transient_start,
)
from shearpks.profiles import make_profile
from shearpks.spectral import Grid, RealField

PI2 = math.pi**2
KOLMO = make_profile("kolmogorov")


def field(sizes, fn):
    g = Grid(sizes)
    return RealField(g, fn(*g.mesh()))


# --- norms -----------------------------------------------------------------


def test_norm_suite_on_a_single_mode():
    r = norm_suite(field((16, 16), lambda x, y: 1 + np.cos(x)))
    assert r.mass == pytest.approx(4 * PI2, rel=1e-14)
    assert r.l2**2 == pytest.approx(6 * PI2, rel=1e-14)
    assert r.linf == pytest.approx(2.0, rel=1e-15)
    assert r.grad_l2**2 == pytest.approx(2 * PI2, rel=1e-14)
    assert r.nonzero_l2_sq == pytest.approx(2 * PI2, rel=1e-14)
    assert r.grad_nonzero_l2**2 == pytest.approx(2 * PI2, rel=1e-14)
    assert r.zero_dev_l2 < 1e-14 and r.dy_zero_l2 < 1e-14


def test_zero_mode_norms_live_on_the_y_torus():
    r = norm_suite(field((16, 16), lambda x, y: 1 + np.cos(y) + np.cos(x)))
    assert r.zero_dev_l2**2 == pytest.approx(math.pi, rel=1e-14)
    assert r.dy_zero_l2**2 == pytest.approx(math.pi, rel=1e-14)
    r3 = norm_suite(field((8, 16, 16), lambda x, y, z: 1 + np.cos(y) * np.cos(z)))
    assert r3.zero_dev_l2**2 == pytest.approx(PI2, rel=1e-14)
    assert r3.nonzero_l2 < 1e-14


# --- hypocoercivity energy --------------------------------------------------


def test_weights_and_constraint():
    w = HypoWeights(A=100.0)
    assert w.constraint_ok
    assert w.alpha(4) == pytest.approx(0.04 / 10 / 2)
    assert w.beta(-2) == pytest.approx(0.005)
    assert w.gamma(4) == pytest.approx(0.04 * 10 / 8)
    assert not HypoWeights(eps_beta=0.1).constraint_ok
    with pytest.raises(ValueError):
        HypoWeights(eps_alpha=0.0)


def test_phi_of_a_flat_mode():
    # n = cos x: only the l2 and gamma terms survive
    A = 100.0
    n = field((16, 32), lambda x, y: np.cos(x))
    rec = phi_energy(n, KOLMO, HypoWeights(A=A))
    assert rec.l2 == pytest.approx(2 * PI2, rel=1e-13)
    assert rec.gamma_term == pytest.approx(0.04 * 10 * PI2, rel=1e-13)
    assert abs(rec.alpha_term) < 1e-14 and abs(rec.beta_term) < 1e-14
    assert rec.total == pytest.approx(2.4 * PI2, rel=1e-13)
    assert rec.per_k[0] == pytest.approx(rec.total, rel=1e-14)


@pytest.mark.parametrize("A", [1.0, 100.0, 1e4])
def test_phi_of_a_tilted_mode(A):
    # n = cos(x + sin y): |n_k|^2 = 1/4, d_y n_k = +-i cos y n_k
    n = field((16, 64), lambda x, y: np.cos(x + np.sin(y)))
    rec = phi_energy(n, KOLMO, HypoWeights(A=A))
    ea, eb, eg = 0.04, 0.01, 0.04
    assert rec.alpha_term == pytest.approx(ea * PI2 / math.sqrt(A), rel=1e-12)
    assert rec.beta_term == pytest.approx(2 * eb * PI2, rel=1e-12)
    assert rec.gamma_term == pytest.approx(eg * math.sqrt(A) * PI2, rel=1e-12)
    assert rec.total == pytest.approx(PI2 * (2 + ea / math.sqrt(A) + 2 * eb + eg * math.sqrt(A)), rel=1e-12)


def test_phi_in_3d_of_y2_independent_data_is_2pi_times_2d():
    w = HypoWeights(A=50.0)
    two = phi_energy(field((16, 32), lambda x, y: np.cos(x + np.sin(y)) + 0.3 * np.sin(2 * x)), KOLMO, w)
    three = phi_energy(field((16, 32, 8), lambda x, y, z: np.cos(x + np.sin(y)) + 0.3 * np.sin(2 * x)), KOLMO, w)
    assert three.total == pytest.approx(2 * math.pi * two.total, rel=1e-12)


def test_phi_y_gradient_option():
    n = field((8, 16, 16), lambda x, y, z: np.cos(x + np.sin(z)))
    w = HypoWeights(A=4.0)
    assert phi_energy(n, KOLMO, w).alpha_term < 1e-14
    assert phi_energy(n, KOLMO, w, y_gradient="full").alpha_term > 0.1
    with pytest.raises(ValueError):
        phi_energy(n, KOLMO, w, y_gradient="z")


def test_phi_rejects_bad_weights_unless_told():
    n = field((8, 16), lambda x, y: np.cos(x))
    bad = HypoWeights(eps_beta=0.1)
    with pytest.raises(ValueError, match="8 eps_beta"):
        phi_energy(n, KOLMO, bad)
    phi_energy(n, KOLMO, bad, require_constraint=False)


def test_violating_the_constraint_breaks_the_lower_bound():
    g = Grid((8, 256))
    good = HypoWeights(A=1.0)
    bad = HypoWeights(eps_alpha=0.01, eps_beta=0.2, eps_gamma=0.01, A=1.0)
    for w, below in ((good, False), (bad, True)):
        n = aligned_field(g, KOLMO, w)
        rec = phi_energy(n, KOLMO, w, require_constraint=False)
        assert (rec.total < 0.5 * norm_suite(n).nonzero_l2_sq) is below


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 100.0, 1e4]))
def test_phi_dominates_half_the_nonzero_norm(seed, A):
    rng = np.random.default_rng(seed)
    g = Grid((16, 32))
    v = rng.standard_normal(g.shape)
    v = np.fft.irfft2(np.fft.rfft2(v) * (np.abs(np.fft.fftfreq(32, 1 / 32))[None, :17] <= 6), s=g.shape)
    n = RealField(g, v)
    assert phi_energy(n, KOLMO, HypoWeights(A=A)).total >= 0.5 * norm_suite(n).nonzero_l2_sq


def test_extremal_modes_bound_every_field():
    # the generalized eigenvalues are the suprema over y-profiles on this grid
    w = HypoWeights(A=100.0)
    ny = 64
    lo, v_lo, hi, v_hi = extremal_sandwich_modes(KOLMO, w, 1, ny)
    g = Grid((8, ny))
    rng = np.random.default_rng(7)
    for _ in range(20):
        v = rng.standard_normal(ny) + 1j * rng.standard_normal(ny)
        v = np.fft.ifft(np.fft.fft(v) * (np.abs(np.fft.fftfreq(ny, 1 / ny)) < ny // 2))
        r = phi_sandwich_check(mode_field(g, 1, v), KOLMO, w)
        assert r.lower <= lo * (1 + 1e-9) and r.upper <= hi * (1 + 1e-9)
    at = phi_sandwich_check(mode_field(g, 1, v_lo), KOLMO, w)
    assert at.lower == pytest.approx(lo, rel=1e-8)


def test_sandwich_on_zero_field():
    r = phi_sandwich_check(field((8, 16), lambda x, y: 1 + 0 * x), KOLMO, HypoWeights())
    assert r.modes_used == 0 and r.C_u == 0


# --- free energies ------------------------------------------------------------


def test_free_energy_of_uniform_density():
    rec = free_energy(field((16, 16), lambda x, y: 2 + 0 * x))
    assert rec.entropy == pytest.approx(2 * math.log(2) * 4 * PI2, rel=1e-14)
    assert rec.interaction == 0
    assert rec.F == rec.entropy


def test_free_energy_of_a_mode_against_quadrature():
    a = 0.5
    rec = free_energy(field((32, 32), lambda x, y: 1 + a * np.cos(x)))
    ent, _ = integrate.quad(lambda x: (1 + a * math.cos(x)) * math.log(1 + a * math.cos(x)), 0, 2 * math.pi)
    assert rec.entropy == pytest.approx(2 * math.pi * ent, rel=1e-12)
    assert rec.interaction == pytest.approx(a * a * PI2, rel=1e-13)


def test_zero_mode_free_energy_of_3d_field():
    n = field((8, 16, 16), lambda x, y, z: 1 + 0.5 * np.cos(y) + 0.2 * np.cos(x))
    z = free_energy(n, "zero_mode_of_3d")
    flat = free_energy(field((16, 16), lambda y, z: 1 + 0.5 * np.cos(y)))
    assert z.F == pytest.approx(flat.F, rel=1e-13) and z.zero_mode_F == z.F
    with pytest.raises(ValueError):
        free_energy(field((8, 8), lambda x, y: 1 + 0 * x), "zero_mode_of_3d")
    rec = free_energy_record(n)
    assert rec.zero_mode_F == pytest.approx(flat.F, rel=1e-13)
    assert math.isfinite(rec.F_gamma) and math.isfinite(rec.entropy_plus)


def test_gamma_branch():
    s = np.array([0.0, 0.5, 1.0, 2.0])
    assert np.allclose(gamma(s), [-1.5, -0.625, 0.0, math.log(2)], atol=1e-15)
    h = 1e-7
    assert (gamma(1 + h) - gamma(1 - h)) / (2 * h) == pytest.approx(1.0, rel=1e-6)


def test_gamma_free_energy_matches_entropy_above_one():
    n0 = field((32,), lambda y: 2 + np.cos(y))
    ent, _ = integrate.quad(lambda y: (2 + math.cos(y)) * math.log(2 + math.cos(y)), 0, 2 * math.pi)
    assert entropy_plus(n0) == pytest.approx(ent, rel=1e-12)
    # c0 = cos y, (1/2) int |c0'|^2 = pi/2
    assert gamma_free_energy(n0) == pytest.approx(ent - math.pi / 2, rel=1e-12)
    with pytest.raises(ValueError):
        gamma_free_energy(field((8,), lambda y: np.cos(y)))


# --- envelope ---------------------------------------------------------------


def test_envelope_and_violations():
    assert envelope(0.2, 1.5, 10.0, 4.0) == pytest.approx(0.2 * math.exp(-0.6))
    series = [(0.0, 0.2), (10.0, 0.2 * math.exp(-1.0)), (20.0, 0.2 * math.exp(-2.0) * (1 - 2e-6))]
    recs = min_bound_check(series, q=0.2, A=10.0, nbar=1.0)
    assert [r.violated for r in recs] == [False, False, True]
    with pytest.raises(ValueError):
        min_bound_check(series, q=0.0, A=1.0, nbar=1.0)


# --- rate fits ----------------------------------------------------------------


def test_rate_fit_recovers_an_exponential():
    t = np.linspace(0, 50, 201)
    v = 3.0 * np.exp(-0.37 * t)
    v[:10] = 3.0 * (1 + 0.1 * t[:10])  # rising transient
    fit = fit_decay_rate(t, v, series="x")
    assert fit.rate == pytest.approx(0.37, rel=1e-12)
    assert fit.reliable and fit.series == "x" and fit.t0 > t[9]


def test_post_transient_start():
    assert post_transient_start(np.array([1.0, 2.0, 1.5, 0.9, 0.1])) == 3
    assert post_transient_start(np.ones(5)) == 0


def test_rate_fit_windows_and_guards():
    t = np.linspace(0, 10, 101)
    v = np.exp(-0.1 * t)
    fit = fit_decay_rate(t, v, window=(2.0, 8.0))
    assert fit.samples == 61 and not fit.reliable and fit.notes
    with pytest.raises(ValueError, match=str(MIN_FIT_SAMPLES)):
        fit_decay_rate(t[:10], v[:10], window="full")
    with pytest.raises(ValueError):
        fit_decay_rate(t, -v)


def test_rate_fit_drops_round_off_tail():
    t = np.arange(100.0)
    v = np.exp(-t)
    v[60:] = 1e-300
    fit = fit_decay_rate(t, v, window="full")
    assert fit.samples == 56 and fit.rate == pytest.approx(1.0, rel=1e-9)
