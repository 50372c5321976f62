import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from gsav_gl.assembly import GLDiscretization, PhysParams
from gsav_gl.config import SimConfig, preset_square
from gsav_gl.linalg import GmresConfig
from gsav_gl.mesh import build_dof_map, unit_square_mesh
from gsav_gl.stepper import (SERIES_COLUMNS, ZETA_CAP, GSAVStepper, compute_Ktau,
                             correction_step, relax_r, relaxation_residual, run,
                             tilde_r_residual, update_tilde_r)
from oracles import element_fields


# ------------------------------------------------------------------ K_tau

@pytest.fixture(scope="module")
def small():
    m = unit_square_mesh(2)
    d = build_dof_map(m, 2)
    return m, d, GLDiscretization(m, d)


def test_ktau_zero_for_equal_fields(small):
    _, d, disc = small
    psi = np.linspace(0, 1, d.n_dofs) * (1 + 1j)
    A = np.ones((2, d.n_dofs))
    assert compute_Ktau(psi, psi, A, A, 0.01, disc.M) == 0.0


def test_ktau_constant_shift(small):
    _, d, disc = small
    c = 0.3 - 0.4j
    psi = np.zeros(d.n_dofs, complex)
    A = np.zeros((2, d.n_dofs))
    assert compute_Ktau(psi + c, psi, A, A, 0.1, disc.M) == pytest.approx(abs(c) ** 2 / 0.01, rel=1e-13)


def test_ktau_against_quadrature_oracle(small):
    m, d, disc = small
    r = np.random.default_rng(3)
    tau = 0.05
    fields = [0.1 * r.standard_normal(d.n_dofs) for _ in range(8)]
    p1, p0 = fields[0] + 1j * fields[1], fields[2] + 1j * fields[3]
    A1, A0 = np.vstack(fields[4:6]), np.vstack(fields[6:8])
    dp = p1 - p0
    dA = A1 - A0
    ref = 0.0
    for wd, ((v, _), (ax, _), (ay, _)) in element_fields(m, d, [dp, dA[0], dA[1]], m=7):
        ref += float(np.sum(wd * (np.abs(v) ** 2 + ax ** 2 + ay ** 2)))
    ref /= tau ** 2
    assert compute_Ktau(p1, p0, A1, A0, tau, disc.M) == pytest.approx(ref, rel=1e-12)


# ----------------------------------------------------------- scalar rules

def test_tilde_r_examples():
    assert update_tilde_r(1.7, 2.0, 0.0, 0.01) == 1.7
    assert update_tilde_r(0.0, 2.0, 5.0, 0.01) == 0.0
    got = update_tilde_r(1.0, 1.0, 5.0, 0.01)
    assert got == pytest.approx(1 / 1.05, abs=1e-15)
    # fixed-point solve of (x - r_prev)/tau = -(x/G_bar) K_bar
    root = brentq(lambda x: (x - 1.0) / 0.01 + x * 5.0, 0.0, 1.0, xtol=1e-16)
    assert got == pytest.approx(root, abs=1e-14)
    assert got == pytest.approx(0.952380952, abs=1e-9)


def test_correction_exact_tracking():
    psi = np.array([0.3 + 0.1j, -0.2j])
    zeta, xi, out, clamped = correction_step(2.5, 2.5, psi)
    assert (zeta, xi) == (1.0, 1.0) and not clamped
    np.testing.assert_array_equal(out, psi)


def test_correction_cap():
    zeta, xi, _, clamped = correction_step(3.0, 1.0, np.ones(2))
    assert zeta == pytest.approx(1 + math.sqrt(3), abs=1e-15)
    assert zeta == pytest.approx(2.7320508, abs=1e-7)
    # xi = 1 - 3 = -2 lies outside [-1, 1]
    assert clamped and xi == -1.0


def test_correction_xi_arithmetic():
    zeta, xi, out, _ = correction_step(0.9, 1.0, np.array([2.0]))
    assert zeta == pytest.approx(0.9)
    assert xi == pytest.approx(0.99, abs=1e-15)
    assert out[0] == pytest.approx(1.98)


def test_relax_case1():
    r, alpha0, gamma, case = relax_r(2.0, 2.0, 1.0, 2.0, 1.0, 0.01)
    assert case == 1 and alpha0 == 0.0 and r == 2.0 and gamma == pytest.approx(1.0)


def test_relax_case2():
    r, alpha0, gamma, case = relax_r(1.2, 1.0, 2.0, 1.1, 2.0, 0.01)
    assert case == 2 and alpha0 == 0.0
    assert gamma == pytest.approx(10 + 1.2 / 1.1, rel=1e-14)
    assert r == 1.0
    # identity: (r - tr)/tau + gamma K_new - (tr/G_bar) K_bar = 0
    assert (r - 1.2) / 0.01 + gamma * 2.0 - (1.2 / 1.1) * 2.0 == pytest.approx(0.0, abs=1e-12)


def test_relax_case3():
    # tilde_r < G_new but tilde_r - G_new + tau (tr/Gb) Kb >= 0
    r, alpha0, gamma, case = relax_r(0.999, 1.0, 1.0, 1.0, 0.5, 0.01)
    assert case == 3 and r == 1.0 and alpha0 == 0.0 and gamma >= 0
    assert relaxation_residual(r, 0.999, gamma, 1.0, 1.0, 0.5, 0.01) <= 1e-13


def test_relax_case4():
    r, alpha0, gamma, case = relax_r(0.5, 1.0, 3.0, 1.0, 0.1, 0.01)
    assert case == 4 and gamma == 0.0
    assert alpha0 == pytest.approx(0.999, abs=1e-15)
    assert r == pytest.approx(0.5005, abs=1e-15)
    assert relaxation_residual(r, 0.5, 0.0, 3.0, 1.0, 0.1, 0.01) <= 1e-12


def test_relax_zero_k_new():
    r, alpha0, gamma, case = relax_r(1.2, 1.0, 0.0, 1.1, 2.0, 0.01)
    assert r == 1.2 and gamma == 0.0


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-6, 100), st.floats(1e-6, 100), st.floats(1e-8, 1e3),
       st.floats(1e-6, 100), st.floats(0, 1e3), st.floats(1e-5, 1.0))
def test_relax_properties(tr, g_new, k_new, g_bar, k_bar, tau):
    r, alpha0, gamma, case = relax_r(tr, g_new, k_new, g_bar, k_bar, tau)
    assert gamma >= 0.0
    assert 0.0 <= alpha0 <= 1.0
    assert relaxation_residual(r, tr, gamma, k_new, g_bar, k_bar, tau) <= 1e-10
    if case != 4:
        assert r == g_new
    # r never exceeds the unrelaxed value r_prev = tr (1 + tau K_bar/G_bar)
    r_prev = tr * (1 + tau * k_bar / g_bar)
    assert r <= r_prev * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.one_of(st.just(0.0), st.floats(1e-12, 100)), st.floats(1e-6, 100), st.floats(0, 1e4),
       st.floats(1e-5, 1.0))
def test_tilde_r_properties(r_prev, g_bar, k_bar, tau):
    tr = update_tilde_r(r_prev, g_bar, k_bar, tau)
    assert 0.0 <= tr <= r_prev
    assert tilde_r_residual(tr, r_prev, g_bar, k_bar, tau) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 50), st.floats(1e-6, 50))
def test_correction_bound(tr, g_bar):
    zeta, xi, out, _ = correction_step(tr, g_bar, np.array([1.0 + 0j]))
    assume(np.isfinite(zeta))
    assert 0.0 <= zeta <= ZETA_CAP
    assert -1.0 <= xi <= 1.0
    assert abs(out[0]) <= 1.0


# -------------------------------------------------------------- time step

def test_advance_stationary_state(small):
    _, d, disc = small
    p = PhysParams(kappa=10.0, H=0.0)
    stepper = GSAVStepper(disc, p, 0.01)
    psi = np.ones(d.n_dofs, complex)
    A = np.zeros((2, d.n_dofs))
    state = stepper.initial_state(psi, A)
    assert state.r == pytest.approx(0.0, abs=1e-14)
    psi1, A1, s1, rep = stepper.advance(state, psi, A)
    assert np.abs(psi1 - psi).max() <= 1e-10
    assert np.abs(A1).max() <= 1e-10
    assert s1.zeta == 1.0 and s1.r <= 1e-12
    assert "g_floor" in s1.flags


def test_advance_report_consistency(small):
    _, d, disc = small
    p = PhysParams(kappa=5.0, H=2.0)
    stepper = GSAVStepper(disc, p, 0.01)
    psi = np.full(d.n_dofs, 0.8 + 0.6j)
    A = np.zeros((2, d.n_dofs))
    state = stepper.initial_state(psi, A)
    psi1, A1, s1, rep = stepper.advance(state, psi, A)
    assert rep.G_new == pytest.approx(stepper.energy(psi1, A1).total, rel=1e-14)
    assert rep.K_new == pytest.approx(compute_Ktau(psi1, psi, A1, A, 0.01, disc.M), rel=1e-14)
    assert s1.step == 1 and s1.t == pytest.approx(0.01)
    assert rep.r_prev == state.r
    assert relaxation_residual(s1.r, s1.tilde_r, s1.gamma, rep.K_new, rep.G_bar, rep.K_bar, 0.01) <= 1e-10
    assert np.abs(psi1).max() <= 1 + 1e-12


def small_config(**kw):
    return preset_square(5.0, **{"n": 4, "T": 0.1, **kw})


def test_run_T0_returns_initial_data():
    res = run(small_config(T=0.0))
    assert res.series == []
    np.testing.assert_array_equal(res.psi, 0.8 + 0.6j)
    np.testing.assert_array_equal(res.A, 0.0)
    assert res.G0 == pytest.approx(12.25, abs=1e-12)


def test_run_series_and_snapshots():
    res = run(small_config(snapshot_interval=4))
    series = res.series
    assert len(series) == 10
    assert list(series[0]) == list(SERIES_COLUMNS)
    assert [s[0] for s in res.snapshots] == [0, 4, 8, 10]
    assert series[-1]["t"] == pytest.approx(0.1)
    assert res.failure is None


def test_run_is_deterministic():
    a, b = run(small_config()), run(small_config())
    np.testing.assert_array_equal(a.psi, b.psi)
    assert a.series == b.series


def test_run_solver_failure_keeps_partial_results():
    cfg = small_config(gmres=GmresConfig(max_iter=1, restart=1, tol=1e-14))
    res = run(cfg)
    assert res.failure is not None and "step 1" in res.failure
    assert res.failed_step == 1
    assert res.reports == []
    np.testing.assert_array_equal(res.psi, 0.8 + 0.6j)


def test_large_tau_warns(caplog):
    m = unit_square_mesh(1)
    d = build_dof_map(m, 1)
    with caplog.at_level("WARNING"):
        GSAVStepper(GLDiscretization(m, d), PhysParams(kappa=1.0, eta=0.5), 1.0)
    assert "exceeds eta" in caplog.text
    assert "energy stability" in SimConfig(eta=0.5, tau=1.0).warnings()[0]
