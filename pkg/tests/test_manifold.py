import numpy as np
import pytest

from relaxim.manifold import (ManifoldError, build_chart, chart_key, chart_samples,
                              compare_epsilon, construct_point, graph_split, linear_manifold_point,
                              lipschitz_of_M, load_chart_values, perron_config, tracking_shadow)
from relaxim.nonlin import DiagonalLinear, Zero
from relaxim.spaces import EnergyVector, energy_norm


def test_reference_config(ref_cfg):
    assert ref_cfg.theta == pytest.approx(2.9289321881345248)
    assert ref_cfg.kappa == pytest.approx(2 / 3)
    assert ref_cfg.T == pytest.approx(13.657, abs=1e-3)
    assert round(1 / ref_cfg.h) == pytest.approx(1 / ref_cfg.h)


def test_refusals(seq16):
    with pytest.raises(ManifoldError) as exc:
        perron_config(seq16, 1, 0.05, 2.0)
    assert exc.value.refused
    with pytest.raises(ManifoldError) as exc:
        perron_config(seq16, 1, 0.1, 1.0)
    assert exc.value.refused and "eps condition" in str(exc.value)
    cfg = perron_config(seq16, 1, 0.05, 1.0)
    with pytest.raises(ManifoldError):
        construct_point([1.0], DiagonalLinear(1.5, 16), cfg, seq16)   # declared L too large


def test_zero_model_is_exact(ref_cfg, seq16):
    pt = construct_point([1.7], Zero(16), ref_cfg, seq16)
    exact = linear_manifold_point([1.7], seq16, 1, 0.05, 16)
    assert pt.iterations == 1
    assert energy_norm(pt.value - exact, seq16) <= 1e-13
    assert pt.value.v[0] == pytest.approx(1.7 * -1.0557280900008412, rel=1e-13)


def test_diagonal_linear_reference_values(ref_cfg, seq16):
    pt = construct_point([1.0], DiagonalLinear(0.5, 16), ref_cfg, seq16)
    # closed form: mode 1 of eps u'' + u' + (1 - 0.5) u = 0 along its slow root,
    # normalised by the boundary identity
    # the quadrature is fourth order: h = 0.01 leaves ~1e-9
    assert pt.value.u[0] == pytest.approx(0.9705627484771406, rel=1e-8)
    assert pt.value.v[0] == pytest.approx(-0.4980607928687557, rel=1e-8)
    np.testing.assert_allclose(pt.value.u[1:], 0.0, atol=1e-14)
    assert pt.contraction <= ref_cfg.kappa + 0.02
    assert pt.boundary_defect <= 1e-12
    d = pt.diagnostics()
    assert d["iterations"] == pt.iterations and "residual" in d


def test_parabolic_diagonal_linear(seq16):
    cfg = perron_config(seq16, 1, 0.0, 1.0)
    pt = construct_point([1.0], DiagonalLinear(0.5, 16), cfg, seq16)
    assert pt.value.u[0] == pytest.approx(1.0, abs=1e-9)
    assert pt.value.v[0] == pytest.approx(-0.5, abs=1e-9)


def test_sine_contraction_and_boundary(ref_cfg, seq16, sine16):
    for p in (-2.0, 0.5, 3.0):
        pt = construct_point([p], sine16, ref_cfg, seq16)
        assert pt.contraction <= ref_cfg.kappa + 0.02
        assert pt.boundary_defect <= 1e-12 * (1 + abs(p))
        # centred-difference residual, second order in h
        assert pt.residual <= 1e-5 * (1 + abs(p))


def test_initial_guess_does_not_matter(ref_cfg, seq16, sine16):
    a = construct_point([1.0], sine16, ref_cfg, seq16)
    b = construct_point([1.0], sine16, ref_cfg, seq16, u_init="zero")
    assert energy_norm(a.value - b.value, seq16) <= 1e-9


def test_graph_split(seq16):
    rng = np.random.default_rng(1)
    xi = EnergyVector(rng.normal(size=16), rng.normal(size=16), 0.05)
    plus, minus = graph_split(xi, seq16, 1, 0.05)
    np.testing.assert_allclose((plus + minus).u, xi.u)
    # the remainder has no base coordinate
    _, again = graph_split(minus, seq16, 1, 0.05)
    np.testing.assert_allclose(again.u, minus.u, atol=1e-13)


def test_chart_and_cache(tmp_path, ref_cfg, seq16, sine16):
    samples = chart_samples(1, axis_points=3, random_count=2, seed=0)
    assert samples.shape == (5, 1) and np.all(samples[0] == 0)
    chart = build_chart(sine16, ref_cfg, seq16, samples=samples, cache_dir=tmp_path)
    key = chart_key(ref_cfg, sine16, samples)
    data = load_chart_values(tmp_path / f"chart-{key}.npz")
    np.testing.assert_allclose(data["u"][2], chart.points[2].value.u)
    chart.to_csv(tmp_path / "chart.csv")
    head = (tmp_path / "chart.csv").read_text().splitlines()[0]
    assert head.startswith("p_1,u_1")
    s = chart.summary()
    assert s["points"] == 5 and s["max_observed_contraction"] <= ref_cfg.kappa + 0.02
    threaded = build_chart(sine16, ref_cfg, seq16, samples=samples, threads=2)
    for a, b in zip(chart.points, threaded.points):
        np.testing.assert_array_equal(a.value.u, b.value.u)


def test_lipschitz_of_M(ref_cfg, seq16):
    rep = lipschitz_of_M(Zero(16), ref_cfg, seq16, count=4)
    # the linear chart has slope ||(1, mu_1^+)||_E
    assert rep.max_ratio == pytest.approx(1.4731903780630885, rel=1e-9)


def test_epsilon_rate(seq16):
    cmp = compare_epsilon([1.0], DiagonalLinear(0.5, 16), [1e-2, 1e-3, 1e-4], seq16, 1, 1.0)
    assert 0.95 <= cmp.slope <= 1.05
    cmp2 = compare_epsilon([1.0], Zero(16), [0.5, 1e-3], seq16, 1, 1.0)
    assert 0.5 in cmp2.skipped


@pytest.mark.slow
def test_tracking_self_consistency(seq16, sine16):
    # a point on the manifold is its own shadow
    cfg = perron_config(seq16, 1, 0.05, 1.0, h=0.0025)
    pt = construct_point([0.8], sine16, cfg, seq16)
    rep = tracking_shadow(pt.value, sine16, cfg, seq16)
    assert energy_norm(rep.shadow - pt.value, seq16) <= 1e-8


def test_tracking_rate(ref_cfg, seq16, sine16):
    rng = np.random.default_rng(4)
    n = np.arange(1, 17)
    xi = EnergyVector(2 * rng.normal(size=16) / n ** 1.5, 2 * rng.normal(size=16) / n ** 0.5, 0.05)
    rep = tracking_shadow(xi, sine16, ref_cfg, seq16)
    assert rep.rate >= 0.95 * ref_cfg.theta
    assert rep.contraction <= ref_cfg.kappa + 0.02
    assert rep.as_dict()["rate"] == rep.rate
