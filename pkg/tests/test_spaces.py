import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relaxim.spaces import (EnergyVector, TimeGrid, ValidationError, WeightedSignal, default_window,
                            energy1_norm, energy_norm, energy_norm_series, sobolev_norm,
                            weighted_l2_norm, weighted_sup_norm)


def test_grid_basics():
    g = TimeGrid.from_step(-1.0, 1.0, 0.01)
    assert g.steps == 200 and g.h == pytest.approx(0.01)
    assert g.index_of(0.0) == 100
    with pytest.raises(ValidationError):
        g.index_of(0.005)
    with pytest.raises(ValidationError):
        TimeGrid(1.0, 0.0, 10)


def test_signal_shape_checks():
    g = TimeGrid(0.0, 1.0, 4)
    with pytest.raises(ValidationError):
        WeightedSignal(g, np.zeros((2, 4)))
    with pytest.raises(ValidationError):
        WeightedSignal(g, np.full((1, 5), np.nan))
    s = WeightedSignal(g, np.ones(5))
    assert s.mode_count == 1
    assert (2 * s - s).coeffs.tolist() == s.coeffs.tolist()


def test_weighted_l2_of_exponential(seq16):
    # e^{theta t} e^{-theta t} = 1 on [0, 2]: norm^2 = 2 lambda_1^s
    theta = 1.7
    g = TimeGrid.from_step(0.0, 2.0, 0.001)
    c = np.zeros((2, g.steps + 1))
    c[1] = np.exp(-theta * g.nodes)
    s = WeightedSignal(g, c)
    assert weighted_l2_norm(s, theta, 0.0, seq16) == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert weighted_l2_norm(s, theta, 1.0, seq16) == pytest.approx(math.sqrt(8.0), rel=1e-12)
    assert weighted_sup_norm(s, theta, 1.0, seq16) == pytest.approx(2.0, rel=1e-12)


def test_weighted_norm_handles_large_weights(seq16):
    g = TimeGrid.from_step(0.0, 200.0, 0.5)
    c = np.exp(-3.0 * g.nodes)[None, :]
    val = weighted_l2_norm(WeightedSignal(g, c), 3.0, 0.0, seq16)
    assert val == pytest.approx(math.sqrt(200.0), rel=1e-10)


def test_energy_norms(seq16):
    u = np.zeros(16)
    v = np.zeros(16)
    u[1], v[1] = 1.0, 2.0
    xi = EnergyVector(u, v, 0.1)
    # eps |v|^2 + |v|^2/lambda + lambda |u|^2 = 0.4 + 1 + 4
    assert energy_norm(xi, seq16) == pytest.approx(math.sqrt(5.4))
    # eps lambda |v|^2 + lambda^2 |u|^2 + |v|^2 = 1.6 + 16 + 4
    assert energy1_norm(xi, seq16) == pytest.approx(math.sqrt(21.6))
    series = energy_norm_series(u[:, None], v[:, None], 0.1, seq16)
    assert series[0] == pytest.approx(energy_norm(xi, seq16))
    assert sobolev_norm(u, seq16, 1.0) == pytest.approx(2.0)


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4),
       st.lists(st.floats(-10, 10), min_size=4, max_size=4),
       st.floats(0.0, 1.0))
def test_energy_norm_triangle(a, b, eps):
    from relaxim.spectrum import Dirichlet1D, eigenvalues
    seq = eigenvalues(Dirichlet1D(), 4)
    x = EnergyVector(np.array(a), np.array(b), eps)
    y = EnergyVector(np.array(b), np.array(a), eps)
    assert energy_norm(x + y, seq) <= energy_norm(x, seq) + energy_norm(y, seq) + 1e-9


def test_energy_vector_validation():
    with pytest.raises(ValidationError):
        EnergyVector(np.zeros(3), np.zeros(2), 0.1)
    with pytest.raises(ValidationError):
        EnergyVector(np.zeros(3), np.zeros(3), -0.1)


def test_csv_roundtrip(tmp_path):
    g = TimeGrid(0.0, 1.0, 2)
    s = WeightedSignal(g, np.array([[1.0, 0.5, 0.25], [0.0, -1.0, 2.0]]))
    path = tmp_path / "s.csv"
    s.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,mode_1,mode_2"
    assert lines[2] == "0.5,0.5,-1.0"


def test_default_window():
    assert default_window(2.0, 1.0) == 20.0
    assert default_window(0.5, 10.0) == 80.0
