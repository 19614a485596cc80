import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxim import _expint
from relaxim.linsolve import (LinearSolveError, boundary_defect, estimate_audit,
                              homogeneous_backward, solve_full_line, solve_semiaxis, symbol_min)
from relaxim.spaces import TimeGrid, ValidationError, WeightedSignal, energy_norm, EnergyVector
from relaxim.spectrum import gap_report

THETA = 2.9289321881345248


def test_symbol_reference_minima(seq16):
    r1 = symbol_min(1.0, THETA, 0.05, 1.0, 4.0, 1)
    r2 = symbol_min(4.0, THETA, 0.05, 1.0, 4.0, 2)
    r3 = symbol_min(9.0, THETA, 0.05, 1.0, 4.0, 3)
    assert (r1.case_tag, r2.case_tag, r3.case_tag) == ("I", "I", "II")
    assert r1.min_abs == pytest.approx(1.5, rel=1e-12)
    assert r2.min_abs == pytest.approx(1.5, rel=1e-12)
    assert r3.min_abs == pytest.approx(math.sqrt(40.0), rel=1e-12)
    assert r3.z_star == pytest.approx(30.0)
    for r in (r1, r2, r3):
        assert abs(r.grid_check - r.min_abs) <= 1e-6 * r.min_abs


def test_phi_functions_small_and_large():
    z = np.array([0.0, 1e-8, 0.5, -3.0, 10.0, -40.0 + 5j])
    phi = _expint.phi_functions(z, 3)
    # phi_1(z) = (e^z - 1)/z, phi_0 = e^z
    np.testing.assert_allclose(phi[0], np.exp(z))
    zz = np.where(z == 0, 1, z)
    ref = np.where(z == 0, 1.0, np.where(np.abs(z) < 1e-3, 1 + z / 2, (np.exp(z) - 1) / zz))
    np.testing.assert_allclose(phi[1], ref, rtol=1e-12)
    assert phi[3][0] == pytest.approx(1 / 6)


def test_causal_recursion_is_fourth_order():
    sigma = np.array([-2.0 + 1j])
    errs = []
    for h in (0.04, 0.02, 0.01):
        t = np.arange(0.0, 4.0 + h / 2, h)
        g = np.cos(3 * t)[None, :]
        w = _expint.causal(sigma, g, h)
        # exact: w' = sigma w + cos(3t), w(0)=0
        s = sigma[0]
        exact = (-s * np.cos(3 * t) + 3 * np.sin(3 * t) + s * np.exp(s * t)) / (s * s + 9)
        errs.append(np.max(np.abs(w[0] - exact)))
    assert errs[0] / errs[1] > 12 and errs[1] / errs[2] > 12


def test_breaks_keep_kinks_exact():
    h = 0.1
    t = np.arange(0.0, 2.0 + h / 2, h)
    k = 10
    g = np.where(t < 1.0, 0.0, (t - 1.0) ** 3)[None, :]
    w = _expint.causal(np.array([-1.0]), g, h, breaks=[k])
    # closed form of w' = -w + (t-1)^3_+ with w(0) = 0
    s = np.clip(t - 1.0, 0, None)
    exact = s ** 3 - 3 * s ** 2 + 6 * s - 6 + 6 * np.exp(-s)
    np.testing.assert_allclose(w[0].real, exact, atol=1e-13)


def _probe(seq, mode, theta):
    K = int(round(80 / theta / 0.01))
    grid = TimeGrid(-K * 0.01, K * 0.01, 2 * K)
    c = np.zeros((16, grid.steps + 1))
    c[mode] = np.exp(-theta * grid.nodes)
    return grid, K, WeightedSignal(grid, c)


@pytest.mark.parametrize("mode,sign", [(0, -1.0), (1, 1.0)])
def test_constant_probe_saturates_the_bound(seq16, mode, sign):
    grid, K, h = _probe(seq16, mode, THETA)
    r = solve_full_line(h, THETA, 0.05, seq16, 1, L=1.0)
    assert r.solution.coeffs[mode, K] == pytest.approx(sign * 2 / 3, rel=1e-10)
    assert 0.99 * (2 / 3) <= r.norm_ratio <= 1.01 * (2 / 3)


def test_complex_mode_probe(seq16):
    # mode 5 has complex roots; u = e^{-theta t}/(lambda_5 + theta(eps theta - 1))
    grid, K, h = _probe(seq16, 4, THETA)
    r = solve_full_line(h, THETA, 0.05, seq16, 1)
    assert r.solution.coeffs[4, K] == pytest.approx(1.0 / (25.0 - 2.5), rel=1e-8)


def test_gap_violation_is_refused(seq16):
    grid = TimeGrid(-1.0, 1.0, 10)
    h = WeightedSignal.zeros(grid, 16)
    with pytest.raises(LinearSolveError):
        solve_full_line(h, THETA, 0.05, seq16, 1, L=2.0)
    with pytest.raises(LinearSolveError):
        solve_full_line(h, 1.0, 0.05, seq16, 1)          # theta below -mu_1^+


def test_semiaxis_homogeneous_is_exact(seq16):
    grid = TimeGrid.from_step(-10.0, 0.0, 0.01)
    r = solve_semiaxis(WeightedSignal.zeros(grid, 16), [1.3], THETA, 0.05, seq16, 1)
    mu = -1.0557280900008412
    np.testing.assert_allclose(r.solution.coeffs[0], 1.3 * np.exp(mu * grid.nodes), rtol=1e-13)
    assert r.boundary_defect <= 1e-14
    xi = EnergyVector(r.solution.coeffs[:, -1], r.velocity.coeffs[:, -1], 0.05)
    assert energy_norm(xi, seq16) / 1.3 == pytest.approx(1.4731903780630885, rel=1e-13)


@given(p=st.floats(-5, 5), amp=st.floats(-3, 3), freq=st.floats(0.1, 4.0))
def test_boundary_identity_for_any_forcing(seq16, p, amp, freq):
    grid = TimeGrid.from_step(-12.0, 0.0, 0.02)
    t = grid.nodes
    c = np.zeros((16, t.size))
    c[:3] = amp * np.sin(freq * t) * np.exp(0.5 * t)
    r = solve_semiaxis(WeightedSignal(grid, c), [p], THETA, 0.05, seq16, 1)
    assert r.boundary_defect <= 1e-12 * (1 + abs(p))
    assert boundary_defect(r.solution.coeffs[:, -1], r.velocity.coeffs[:, -1], np.array([p]),
                           seq16, 0.05) <= 1e-12 * (1 + abs(p))


def test_full_line_converges_with_grid(seq16):
    vals = []
    for h in (0.02, 0.01):
        grid = TimeGrid.from_step(-10.0, 10.0, h)
        c = np.zeros((16, grid.steps + 1))
        c[:4] = np.exp(-grid.nodes ** 2)
        r = solve_full_line(WeightedSignal(grid, c), THETA, 0.05, seq16, 1)
        vals.append(r.solution.at(0.0)[:4])
    np.testing.assert_allclose(vals[0], vals[1], atol=1e-7)


def test_parabolic_solve(seq16):
    th = gap_report(seq16, 1, 0.0, 1.0).theta
    assert th == 2.5
    grid, K, h = _probe(seq16, 1, th)
    r = solve_full_line(h, th, 0.0, seq16, 1)
    # eps = 0: u = e^{-theta t}/(lambda - theta)
    assert r.solution.coeffs[1, K] == pytest.approx(1 / 1.5, rel=1e-10)


def test_homogeneous_backward_checks(seq16):
    with pytest.raises(ValidationError):
        homogeneous_backward([1.0], THETA, 0.05, seq16, 1, TimeGrid(-1.0, 1.0, 4))
    with pytest.raises(ValidationError):
        homogeneous_backward([1.0, 2.0], THETA, 0.05, seq16, 1, TimeGrid(-1.0, 0.0, 4))


def test_estimate_audit_is_stable_in_eps(seq16):
    audits = []
    for eps in (0.01, 0.005):
        th = gap_report(seq16, 1, eps, 1.0).theta
        grid = TimeGrid.from_step(-15.0, 0.0, 0.01)
        c = np.zeros((16, grid.steps + 1))
        c[:3] = np.exp(0.3 * grid.nodes) * np.cos(grid.nodes)
        h = WeightedSignal(grid, c)
        r = solve_semiaxis(h, [1.0], th, eps, seq16, 1)
        audits.append(estimate_audit(r, h, [1.0], th, eps, seq16, 1))
    assert all(a.finite for a in audits)
    assert audits[0].drift(audits[1]) < 0.25
