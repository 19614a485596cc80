import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxim.spectrum import (Custom, Dirichlet1D, Sphere, SpectrumError, Torus,
                              characteristic_roots, critical_index, eigenvalues, gap_report,
                              gap_scan, projector_coefficients, root_arrays, weight_bracket,
                              weight_exponent)


def test_dirichlet_values():
    seq = eigenvalues(Dirichlet1D(), 5)
    np.testing.assert_allclose(seq.values, [1, 4, 9, 16, 25])
    assert seq[1] == 1.0 and seq[5] == 25.0
    seq2 = eigenvalues(Dirichlet1D(length=2 * math.pi), 3)
    np.testing.assert_allclose(seq2.values, [0.25, 1.0, 2.25])


def test_sphere_and_torus_multiplicities():
    s2 = eigenvalues(Sphere(2), 8)
    # k(k+1) with multiplicity 2k+1
    np.testing.assert_allclose(s2.values, [2, 2, 2, 6, 6, 6, 6, 6])
    t2 = eigenvalues(Torus(2), 6)
    np.testing.assert_allclose(t2.values, [1, 1, 1, 1, 2, 2])


def test_custom_validation():
    with pytest.raises(SpectrumError):
        eigenvalues(Custom((1.0, 0.5)), 2)
    with pytest.raises(SpectrumError):
        eigenvalues(Custom((0.0, 1.0)), 2)
    seq = eigenvalues(Custom((1.0, 2.0, 5.0)), 2)
    assert seq.count == 2


def test_roots_reference_values():
    r = characteristic_roots(1.0, 0.05)
    assert r.mu_plus.real == pytest.approx(-1.0557280900008412, rel=1e-15)
    assert r.mu_minus.real == pytest.approx(-18.944271909999159, rel=1e-15)
    c = characteristic_roots(5.0, 0.1)
    assert c.mu_plus == pytest.approx(-5 + 5j, rel=1e-14)
    assert c.mu_minus == pytest.approx(-5 - 5j, rel=1e-14)
    assert not c.real


def test_parabolic_branch():
    r = characteristic_roots(4.0, 0.0)
    assert r.parabolic and r.mu_plus == -4.0 and r.mu_minus.real == -math.inf


@given(lam=st.floats(0.01, 1e4), eps=st.floats(1e-8, 10.0))
def test_roots_solve_the_quadratic(lam, eps):
    mp, mm = root_arrays([lam], eps)
    for mu in (mp[0], mm[0]):
        assert abs(eps * mu * mu + mu + lam) <= 1e-9 * (lam + abs(mu) + eps * abs(mu) ** 2)


def test_critical_index():
    seq = eigenvalues(Dirichlet1D(), 16)
    assert critical_index(seq, 0.05) == 2
    assert critical_index(seq, 0.0) is None
    assert critical_index(seq, 10.0) == 0


def test_projector_reference_values():
    seq = eigenvalues(Dirichlet1D(), 4)
    pc = projector_coefficients(seq, 1, 0.05)
    assert pc.a[0] == pytest.approx(0.05590169943749474, rel=1e-14)
    assert pc.b[0] == pytest.approx(1.0590169943749474, rel=1e-14)
    pc0 = projector_coefficients(seq, 2, 0.0)
    np.testing.assert_array_equal(pc0.a, [0, 0])
    np.testing.assert_array_equal(pc0.b, [1, 1])
    with pytest.raises(SpectrumError):
        projector_coefficients(seq, 3, 0.05)        # lambda_3 = 9 has complex roots


def test_reference_gap_report():
    seq = eigenvalues(Dirichlet1D(), 16)
    rep = gap_report(seq, 1, 0.05, 1.0)
    assert rep.gap == 3 and rep.gap_ok and rep.eps_ok and rep.admissible
    assert rep.theta == pytest.approx(2.9289321881345248, rel=1e-14)
    assert rep.contraction == pytest.approx(2 / 3)
    bad = gap_report(seq, 1, 0.1, 1.0)
    assert not bad.eps_ok and bad.reasons == ["eps condition"]


def test_gap_is_strict_and_eps_condition_is_not():
    seq = eigenvalues(Custom((1.0, 3.0, 10.0)), 3)
    assert not gap_report(seq, 1, 0.0, 1.0).gap_ok         # gap == 2L
    # 3 * 3 + 1 = 10 = 1/eps exactly
    assert gap_report(seq, 1, 0.1, 0.5).eps_ok


def test_gap_scan_small_eps():
    seq = eigenvalues(Dirichlet1D(), 16)
    assert [r.N for r in gap_scan(seq, 1.0, 0.01)] == [1, 2, 3, 4]
    assert gap_scan(eigenvalues(Custom(tuple(range(1, 17))), 16), 1.0, 0.001) == []


@given(N=st.integers(1, 8), eps=st.floats(0.0, 0.002))
def test_theta_inside_bracket(N, eps):
    seq = eigenvalues(Dirichlet1D(), 10)
    th = weight_exponent(seq[N], seq[N + 1], eps)
    lo, hi = weight_bracket(seq, N, eps)
    assert lo < th < hi
    assert abs(2 * th * (eps * th - 1) + seq[N] + seq[N + 1]) <= 1e-10 * seq[N + 1]
