import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxim.nonlin import (BumpMollifier, DiagonalLinear, NemytskiiSine1D, NonlinearityError,
                            UnsupportedBasisError, Zero, admissible_dimensions, build_counterexample,
                            build_gap_blocker, cubic_function, cutoff, equilibrium_spectrum,
                            lipschitz_estimate, normal_hyperbolicity_gaps, pencil_roots,
                            read_table, sine_function, smoothstep, table_function)
from relaxim.spectrum import Custom, Dirichlet1D, Torus, eigenvalues


def test_smoothstep_and_cutoff_are_c2():
    s = np.linspace(-0.5, 1.5, 2001)
    v = smoothstep(s)
    assert v[0] == 0.0 and v[-1] == 1.0
    assert np.all(np.diff(v) >= 0)
    assert cutoff(np.array([0.0, 0.5, 1.0])).tolist() == [1.0, 0.0, 0.0]


def test_mollifier_ramp_is_smooth_max():
    m = BumpMollifier(0.2)
    x = np.array([-1.0, -0.2, 0.0, 0.2, 1.0])
    r = m.ramp(x)
    assert r[0] == 0.0 and r[-1] == pytest.approx(1.0)
    assert 0.0 < r[2] < 0.2
    assert np.all(m.ramp_d1(np.linspace(-1, 1, 101)) <= 1.0 + 1e-12)


def test_sine_nemytskii_lipschitz(seq16):
    F = NemytskiiSine1D(sine_function(), 16)
    assert F.declared_L == 1.0
    assert lipschitz_estimate(F, 300, 2.0, seed=1) <= 1.0 + 1e-12
    # projection is exact on the sine basis
    np.testing.assert_allclose(F.P @ F.S, np.eye(16), atol=1e-13)
    np.testing.assert_allclose(F(np.zeros(16)), 0.0)


def test_jacobian_matches_differences(seq16):
    F = NemytskiiSine1D(sine_function(1.0, 1.3), 16, shift=np.linspace(1, 0, 16))
    u = np.random.default_rng(3).normal(size=16)
    J = F.jacobian(u)
    h = 1e-6
    fd = np.stack([(F(u + h * e) - F(u - h * e)) / (2 * h) for e in np.eye(16)], axis=1)
    np.testing.assert_allclose(J, fd, atol=1e-8)


def test_nemytskii_needs_sine_basis():
    F = NemytskiiSine1D(sine_function(), 4)
    F.check_basis(eigenvalues(Dirichlet1D(), 4))
    with pytest.raises(UnsupportedBasisError):
        F.check_basis(eigenvalues(Torus(2), 4))
    with pytest.raises(NonlinearityError):
        NemytskiiSine1D(cubic_function(), 4)


def test_table_function(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("# x, f\n-1,-1\n0,0\n1,0.5\n")
    f = read_table(path)
    assert float(f.f(0.5)) == pytest.approx(0.25)
    assert f.sup_df == pytest.approx(1.0)
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0\n0,1\n")
    with pytest.raises(NonlinearityError):
        read_table(bad)
    with pytest.raises(NonlinearityError):
        table_function([1.0, 0.0], [1.0, 2.0])          # x must increase


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_diagonal_linear_lipschitz(a, b):
    F = DiagonalLinear(0.7, 6)
    a, b = np.array(a), np.array(b)
    assert np.linalg.norm(F(a) - F(b)) <= 0.7 * np.linalg.norm(a - b) + 1e-12


def test_gap_blocker_rotation(seq16):
    F = build_gap_blocker(seq16, 1, 0.1)
    spec = equilibrium_spectrum(F, np.zeros(16), 0.05, seq16, count=4)
    assert spec.nu[0].real == pytest.approx(-2.9275, abs=1e-4)
    assert abs(spec.nu[0].imag) == pytest.approx(0.1414, abs=1e-4)
    assert 1 in spec.collisions


def test_pencil_roots():
    r = pencil_roots([1.0, 4.0], 0.05)
    np.testing.assert_allclose(0.05 * r ** 2 + r + np.array([1, 4, 1, 4]), 0, atol=1e-12)
    np.testing.assert_allclose(pencil_roots([2.0], 0.0), [-2.0])


@pytest.fixture(scope="module")
def counterexample():
    seq = eigenvalues(Custom(tuple(float(n * n) for n in range(1, 17))), 16)
    return seq, build_counterexample(seq, 0.05, 3.0, 0.5)


def test_counterexample_structure(counterexample):
    seq, F = counterexample
    assert F.R == 80.0
    assert F.jacobian_bound() < 3.0
    assert lipschitz_estimate(F, 400, 1.0, 0) < 3.0
    plus, minus = F.equilibria()
    lam = seq.values
    np.testing.assert_allclose(F(plus), lam * plus, atol=1e-12)
    np.testing.assert_allclose(F(minus), lam * minus, atol=1e-9 * F.R)


def test_counterexample_blocks_every_dimension(counterexample):
    seq, F = counterexample
    plus, minus = F.equilibria()
    sp = equilibrium_spectrum(F, plus, 0.05, seq, count=16)
    sm = equilibrium_spectrum(F, minus, 0.05, seq, count=16)
    assert admissible_dimensions(sp) == [2]
    assert admissible_dimensions(sm) == []
    assert normal_hyperbolicity_gaps([sp, sm]) == []
    # below the critical index: odd pairs collide at 0, even pairs at R e_1
    assert 1 in sp.collisions and 2 in sm.collisions


def test_counterexample_rejects_gap():
    seq = eigenvalues(Custom(tuple(float(n * n) for n in range(1, 9))), 8)
    with pytest.raises(NonlinearityError):
        build_counterexample(seq, 0.05, 1.0, 0.5)        # lambda_2 - lambda_1 = 3 >= 2L


def test_model_rejects_wrong_length():
    with pytest.raises(NonlinearityError):
        Zero(4)(np.zeros(3))
