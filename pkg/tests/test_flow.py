import numpy as np
import pytest
from hypothesis import given, strategies as st

from tsparametrix import ConfigurationError, constant_coefficients, flow, flow_map, make_coefficients
from tsparametrix.flow import transported_distance

LINEAR = {"family": "linear", "matrix": -0.7, "offset": 0.4}


def _closed(x, s_from, s_to, a=-0.7, b=0.4):
    e = np.exp(a * (s_to - s_from))
    return e * x + b / a * (e - 1.0)


@given(st.floats(-5, 5), st.floats(0, 2), st.floats(0, 2))
def test_linear_flow_closed_form(x, s0, s1):
    c = make_coefficients(1, None, LINEAR)
    got = flow_map(c, np.array([x]), s0, s1)
    assert got[0] == pytest.approx(_closed(x, s0, s1), rel=1e-8, abs=1e-9)


@given(st.floats(-3, 3), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_semigroup_property(x, a, b, c_):
    c = make_coefficients(1, None, LINEAR)
    via = flow_map(c, flow_map(c, np.array([x]), a, b), b, c_)
    direct = flow_map(c, np.array([x]), a, c_)
    assert via[0] == pytest.approx(direct[0], abs=1e-9)


def test_path_interpolation_and_anchor():
    c = make_coefficients(1, None, LINEAR)
    p = flow(c, [1.5], 1.0, 0.0)
    assert p.direction == "backward"
    np.testing.assert_array_equal(p.at(np.array([1.0]))[0], [1.5])
    s = np.linspace(0, 1, 7)
    np.testing.assert_allclose(p.at(s)[:, 0], _closed(1.5, 1.0, s), atol=1e-9)
    with pytest.raises(ConfigurationError):
        p.at(np.array([1.5]))


def test_bounded_drift_does_not_move_the_flow():
    c = make_coefficients(1, None, {"family": "sinusoidal", "amplitude": 0.5, "frequency": 1.0})
    assert not c.has_flow
    np.testing.assert_array_equal(flow_map(c, np.array([0.3]), 0.0, 1.0), [0.3])


def test_transported_distance_symmetry():
    c = make_coefficients(1, None, LINEAR)
    fwd, bwd = transported_distance(c, 0.0, 1.0, 0.2, 1.1)
    assert fwd == pytest.approx(abs(1.1 - _closed(0.2, 0.0, 1.0)), abs=1e-9)
    assert bwd == pytest.approx(abs(_closed(1.1, 1.0, 0.0) - 0.2), abs=1e-9)
    c0 = constant_coefficients(1)
    assert transported_distance(c0, 0.0, 1.0, 0.2, 1.1) == pytest.approx((0.9, 0.9))


def test_two_dimensional_rotation():
    A = [[0.0, -1.0], [1.0, 0.0]]
    c = make_coefficients(2, {"family": "constant", "value": 1.0}, {"family": "linear", "matrix": A, "offset": 0.0})
    got = flow_map(c, np.array([1.0, 0.0]), 0.0, np.pi / 2)
    np.testing.assert_allclose(got, [0.0, 1.0], atol=1e-8)
