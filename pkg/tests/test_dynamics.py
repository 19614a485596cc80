import math

import numpy as np
import pytest

from relaxim.dynamics import (DynamicsError, EvolveConfig, GrowthFit, energy_estimate_audit, evolve,
                              fit_drift, fit_growth, integrate)
from relaxim.nonlin import DiagonalLinear, NemytskiiSine1D, Zero, sine_function
from relaxim.spaces import EnergyVector


def _exact_mode(lam, eps, u0, v0, t):
    # eps u'' + u' + lam u = 0
    r = np.roots([eps, 1.0, lam]).astype(complex)
    A = np.array([[1, 1], [r[0], r[1]]])
    c = np.linalg.solve(A, [u0, v0])
    return (c[0] * np.exp(r[0] * t) + c[1] * np.exp(r[1] * t)).real


@pytest.mark.parametrize("method", ["midpoint", "etdrk4"])
def test_linear_modes_are_exact(seq16, method):
    u0 = 1.0 / np.arange(1, 17) ** 2
    v0 = np.zeros(16)
    tr = evolve(EnergyVector(u0, v0, 0.05), Zero(16), 0.05, EvolveConfig(0.01, 2.0, method, False), seq16)
    for n in (0, 3, 10):
        np.testing.assert_allclose(tr.u[n], _exact_mode(seq16.values[n], 0.05, u0[n], 0.0, tr.t),
                                   atol=1e-12)


def _final(method, h, seq):
    F = NemytskiiSine1D(sine_function(2.0), 16)
    u0 = np.sin(np.arange(1, 17)) / np.arange(1, 17) ** 2
    v0 = np.zeros(16)
    U, V = integrate(u0[:, None], v0[:, None], F, 0.05, seq.values, h, int(round(1.0 / h)), method)
    return U[:, 0, -1]


@pytest.mark.parametrize("method,order", [("midpoint", 2), ("etdrk4", 4)])
def test_convergence_order(seq16, method, order):
    ref = _final("etdrk4", 0.0025, seq16)
    e1 = np.linalg.norm(_final(method, 0.04, seq16) - ref)
    e2 = np.linalg.norm(_final(method, 0.02, seq16) - ref)
    assert math.log2(e1 / e2) > order - 0.3


def test_parabolic_limit(seq16):
    F = DiagonalLinear(0.5, 16)
    u0 = np.zeros(16)
    u0[0] = 1.0
    tr = evolve(EnergyVector(u0, np.zeros(16), 0.0), F, 0.0, EvolveConfig(0.01, 1.0, "etdrk4"), seq16)
    assert tr.u[0, -1] == pytest.approx(math.exp(-0.5), rel=1e-10)
    assert tr.v[0, -1] == pytest.approx(-0.5 * math.exp(-0.5), rel=1e-10)
    assert tr.error_estimate < 1e-10


def test_blowup_is_reported(seq16):
    F = DiagonalLinear(1e6, 16)
    with pytest.raises(DynamicsError):
        evolve(EnergyVector(np.ones(16), np.zeros(16), 0.05), F, 0.05,
               EvolveConfig(0.01, 40.0, "midpoint", False), seq16)


def test_config_validation():
    with pytest.raises(ValueError):
        EvolveConfig(h=0.0)
    with pytest.raises(ValueError):
        EvolveConfig(method="euler")
    assert EvolveConfig(0.01, 5.0).steps == 500


def test_trajectory_csv(tmp_path, seq16):
    tr = evolve(EnergyVector(np.ones(16) * 0.1, np.zeros(16), 0.05), Zero(16), 0.05,
                EvolveConfig(0.1, 0.3, "midpoint", False), seq16)
    tr.to_csv(tmp_path / "t.csv", seq16, coefficients=True)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert len(rows) == 5 and rows[0].startswith("t,energy,u_1")


def test_fit_growth():
    t = np.linspace(0, 4, 401)
    g = fit_growth(t, 2.0 * np.exp(0.5 * t))
    assert g.K == pytest.approx(0.5, rel=1e-6) and g.C == pytest.approx(2.0, rel=1e-6)
    assert fit_growth(t, np.exp(-t)).K == 0.0
    assert fit_drift(GrowthFit(1.0, 0.1), GrowthFit(1.1, 0.2)) == pytest.approx(0.1)


def test_energy_audit_linear_rate(seq16):
    F = DiagonalLinear(2.0, 16)
    rng = np.random.default_rng(0)
    n = np.arange(1, 17)
    trs = []
    for _ in range(3):
        u0 = rng.normal(size=16) / n ** 2
        v0 = F(u0) - seq16.values * u0
        trs.append(evolve(EnergyVector(u0, v0, 0.01), F, 0.01, EvolveConfig(0.01, 5.0, "etdrk4", False), seq16))
    audit = energy_estimate_audit(trs, F, 0.01, seq16, pairs=[(0, 1)])
    # squared energies grow at 2(c - lambda_1) = 2, norms of differences at 1
    assert 1.9 < audit.energy.K < 2.05
    assert audit.lipschitz is not None and 0.95 < audit.lipschitz.K < 1.02
