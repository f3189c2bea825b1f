import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from tsparametrix import (AssumptionError, ConfigurationError, ConvolutionScheme, SeriesState, SpaceGrid,
                          Tempering, constant_coefficients, convolve, density, frozen_density_grid,
                          frozen_density_point, holder_coefficients, isotropic_stable, kernel_H,
                          make_coefficients, series)
from tsparametrix.parametrix import LatticeKernels, evaluator


def test_kernel_routes_and_time_derivative_oracle():
    # zero drift, untempered: (L - L~) p~ = (sigma_x^a / sigma_y^a - 1) d/ds p~^{s,y}(0, s, x, y)
    m = isotropic_stable(1, 1.2)
    c = holder_coefficients(1, 1.0, 0.5, 0.5, 0.0)
    T, x, y = 0.3, 0.4, -0.2
    fourier = kernel_H(m, c, 0.0, T, x, y, method="fourier")
    split = kernel_H(m, c, 0.0, T, x, y, method="split")
    sx = 1 + 0.5 * min(1.0, abs(x) ** 0.5)
    sy = 1 + 0.5 * min(1.0, abs(y) ** 0.5)
    e = 1e-4
    f = lambda s: frozen_density_point(m, c, 0.0, s, s, y, x, y)
    fd = (sx ** 1.2 / sy ** 1.2 - 1) * (f(T + e) - f(T - e)) / (2 * e)
    assert fourier == pytest.approx(fd, rel=1e-6)
    assert split == pytest.approx(fourier, rel=2e-5)


def test_kernel_with_bounded_drift_dual_route(holder_model):
    m, c = holder_model
    a = kernel_H(m, c, 0.0, 0.25, 0.3, 1.1, method="fourier")
    b = kernel_H(m, c, 0.0, 0.25, 0.3, 1.1, method="split")
    assert a == pytest.approx(b, rel=2e-5)


def test_kernel_vanishes_for_constant_coefficients():
    m = isotropic_stable(1, 1.5)
    assert kernel_H(m, constant_coefficients(1, 1.3), 0.0, 0.5, 0.2, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_lattice_kernel_close_to_point_kernel(holder_model):
    m, c = holder_model
    g = SpaceGrid.line(0.0, 12.8, 256)
    lk = LatticeKernels(m, c, g)
    ax = g.axes()[0]
    H = lk.matrix(0.0, 0.3)
    ix, iy = g.index_of(0.4)[0], g.index_of(-0.2)[0]
    ref = kernel_H(m, c, 0.0, 0.3, ax[ix], ax[iy])
    assert H[ix, iy] == pytest.approx(ref, abs=2e-3)


@given(st.sampled_from([0.25, 0.5, 1.0]), st.integers(16, 40), st.floats(0.05, 2.0))
def test_scheme_weights_integrate_constants(g, n, span):
    # 1/g integer: the Beta quantile Jacobian is smooth and the rule is spectrally accurate
    s = ConvolutionScheme(0.0, span, n, g)
    assert np.all((s.nodes > 0) & (s.nodes < span))
    assert np.all(np.diff(s.nodes) > 0)
    assert s.weights.sum() == pytest.approx(span, rel=1e-10)


@given(st.floats(0.26, 0.99), st.integers(4, 32))
def test_scheme_weights_converge_for_any_grading(g, n):
    err = [abs(ConvolutionScheme(0.0, 1.0, k, g).weights.sum() - 1.0) for k in (n, 2 * n)]
    assert err[1] <= err[0] + 1e-14 and err[0] < 5e-3


def test_convolve_against_endpoint_weighted_quadrature():
    m = isotropic_stable(1, 1.2)
    g = SpaceGrid.line(0.0, 25.6, 512)
    lk = LatticeKernels(m, constant_coefficients(1, 1.0), g)
    t, T = 0.0, 0.5
    ind = (np.abs(g.axes()[0]) <= 1.0).astype(float)
    left = lambda u: lk.diagonal(u - t, 256)
    right = lambda u: ind * (T - u) ** -0.5
    mass = lambda u: float(left(u) @ ind * g.spacing[0])
    ref, _ = integrate.quad(mass, t, T, weight="alg", wvar=(0, -0.5), limit=200)
    got = convolve(left, right, ConvolutionScheme(t, T, 16, 0.5, grid=g), rel_tol=1e-8)
    assert float(got) == pytest.approx(ref, rel=1e-8)


def test_degenerate_series_is_frozen_density():
    m = isotropic_stable(1, 1.2)
    c = constant_coefficients(1, 1.3)
    g = SpaceGrid.line(0.0, 25.6, 512)
    st_ = series(m, c, 0.0, 0.5, g)
    fd = frozen_density_grid(m, c, 0.0, 0.5, 0.5, 0.0, 0.0, g, check=False)
    assert st_.r_used == 1 and st_.converged
    np.testing.assert_allclose(st_.partial_sum.values, fd.values, atol=1e-10)


@pytest.fixture(scope="module")
def small_series(holder_model):
    m, c = holder_model
    g = SpaceGrid.line(0.0, 12.8, 128)
    return series(m, c, 0.0, 0.25, g, r_max=6)


def test_sweep_and_laplace_engines_agree(holder_model, small_series):
    m, c = holder_model
    sw = series(m, c, 0.0, 0.25, small_series.grid, r_max=6, method="sweep", n_time=16)
    assert sw.meta["richardson_ok"]
    np.testing.assert_allclose(sw.partial_sum.values, small_series.partial_sum.values, atol=2e-4)
    for a, b in zip(sw.norms[:4], small_series.norms[:4]):
        assert a == pytest.approx(b, rel=0.05)


def test_series_state_roundtrip(tmp_path, small_series):
    small_series.save(tmp_path / "s")
    back = SeriesState.load(tmp_path / "s")
    np.testing.assert_array_equal(back.partial_sum.values, small_series.partial_sum.values)
    assert back.norms == small_series.norms and back.r_used == small_series.r_used
    assert density(back, 0.0, 0.5) == pytest.approx(float(small_series.partial_sum.at(np.array([0.5]))[0]))
    with pytest.raises(ConfigurationError):
        density(back, 1.0, 0.5)
    fn = evaluator(small_series)
    assert np.isnan(fn(np.array([100.0]))[0])


def test_series_refuses_failed_assumptions():
    m = isotropic_stable(1, 0.8)
    c = make_coefficients(1, {"family": "constant", "value": 1.0},
                          {"family": "sinusoidal", "amplitude": 0.5, "frequency": 1.0})
    with pytest.raises(AssumptionError):
        series(m, c, 0.0, 1.0, SpaceGrid.line(0.0, 12.8, 128))


def test_filtered_tempered_series_stays_positive():
    m = isotropic_stable(1, 1.0, tempering=Tempering.polynomial(4))
    c = holder_coefficients(1, 1.0, 0.5, 0.5, 0.0)
    st_ = series(m, c, 0.0, 1.0, SpaceGrid.line(0.0, 64.0, 512), filter_order=16)
    raw = sum(t.values for t in st_.terms)
    ax = st_.grid.axes()[0]
    # beyond |x| ~ 25 the density (~1e-9) meets the absolute accuracy floor of the engine
    assert np.all(raw[np.abs(ax) <= 25] > 0)
    assert raw.min() > -5e-9
    assert st_.meta["mass_total"] == pytest.approx(1.0, abs=0.01)
