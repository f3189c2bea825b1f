import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsparametrix import (DensityField, ResolutionError, SpaceGrid, constant_coefficients, dirac_probe,
                          frozen_density_grid, frozen_density_point, isotropic_stable, make_coefficients)


def cauchy(z, scale):
    return scale / (np.pi * (scale ** 2 + z ** 2))


@given(st.floats(-20, 20), st.floats(0.05, 2.0))
def test_point_density_matches_cauchy(z, tau):
    m = isotropic_stable(1, 1.0)
    c = constant_coefficients(1, 1.0)
    got = frozen_density_point(m, c, 0.0, tau, tau, 0.0, 0.0, z)
    assert got == pytest.approx(cauchy(z, tau), abs=1e-8)


def test_grid_density_matches_cauchy_with_sigma():
    m = isotropic_stable(1, 1.0)
    c = constant_coefficients(1, 2.0)
    g = SpaceGrid.line(0.5, 64.0, 2048)
    f = frozen_density_grid(m, c, 0.0, 0.5, 0.5, 0.0, 0.5, g)
    ax = g.axes()[0]
    sel = np.abs(ax - 0.5) <= 5
    # periodic images of the |x|^-2 tails cost about 1.6e-5 at this width
    np.testing.assert_allclose(f.values[sel], cauchy(ax[sel] - 0.5, 1.0), atol=3e-5)


def test_lipschitz_drift_is_frozen_along_the_flow():
    # frozen shift is y - theta_{t,T}(y), so p~(t, T, x, y) is centred at theta_{t,T}(y) - x
    m = isotropic_stable(1, 1.0)
    c = make_coefficients(1, {"family": "constant", "value": 1.0},
                          {"family": "linear", "matrix": -0.7, "offset": 0.4})
    T, y, x = 0.8, 1.3, 0.1
    back = np.exp(0.7 * T) * y + 0.4 / -0.7 * (np.exp(0.7 * T) - 1.0)
    got = frozen_density_point(m, c, 0.0, T, T, y, x, y)
    assert got == pytest.approx(cauchy(back - x, T), rel=1e-6)


def test_grid_and_point_routes_agree(holder_model):
    m, c = holder_model
    g = SpaceGrid.line(0.0, 25.6, 1024)
    f = frozen_density_grid(m, c, 0.0, 0.3, 0.3, 0.4, 0.0, g, pad=8)
    for z in (-1.0, 0.0, 0.4, 2.5):
        k = g.index_of(z)[0]
        ref = frozen_density_point(m, c, 0.0, 0.3, 0.3, 0.4, 0.0, g.axes()[0][k])
        assert f.values[k] == pytest.approx(ref, abs=2e-6)
    assert f.mass + f.meta["tail_estimate"] == pytest.approx(1.0, abs=2e-3)


def test_field_csv_roundtrip_and_outside_query(tmp_path):
    m = isotropic_stable(1, 1.5)
    g = SpaceGrid.line(0.0, 12.8, 256)
    f = frozen_density_grid(m, constant_coefficients(1), 0.0, 1.0, 1.0, 0.0, 0.0, g)
    f.to_csv(tmp_path / "f.csv")
    back = DensityField.from_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.values, f.values)
    with pytest.raises(ResolutionError):
        f.at(np.array([20.0]))


def test_dirac_probe_recovers_test_function(holder_model):
    m, c = holder_model
    f = lambda y: np.exp(-np.asarray(y) ** 2 / 0.5)
    g = SpaceGrid.line(0.3, 6.0, 2048)
    r = dirac_probe(m, c, f, 0.3, 0.0, 0.02, g)
    assert abs(r.value - f(0.3)) < 0.1
