import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from tsparametrix import (ConfigurationError, Tempering, exponent, isotropic_stable, make_coefficients,
                          product_stable, relativistic_stable, sample_large_jump, small_jump_covariance,
                          tail_mass, validate_assumptions)
from tsparametrix.levy import exponent_quadrature, stable_constant


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_stable_constant_against_quad(alpha):
    # independent route: Fourier-weighted quad of (1 - cos s) s^(-1-alpha)
    near, _ = integrate.quad(lambda s: (1 - math.cos(s)) * s ** (-1 - alpha), 0, 1, limit=200)
    tail_pow = 1.0 / alpha
    osc, _ = integrate.quad(lambda s: s ** (-1 - alpha), 1, np.inf, weight="cos", wvar=1.0)
    assert stable_constant(alpha) == pytest.approx(near + tail_pow - osc, rel=1e-8)


@pytest.mark.parametrize("alpha", [0.7, 1.0, 1.6])
def test_closed_form_matches_quadrature(alpha):
    m = isotropic_stable(1, alpha, c=1.3)
    z = np.array([0.05, 0.7, 3.0, 40.0])
    np.testing.assert_allclose(exponent_quadrature(m, z), exponent(m, z), rtol=1e-7)


def test_relativistic_exponent_dual_route():
    m = relativistic_stable(1, 1.5)
    z = np.array([0.1, 1.0, 5.0])
    closed = -((1 + z ** 2) ** 0.75 - 1)
    np.testing.assert_allclose(exponent(m, z), closed, rtol=1e-12)
    np.testing.assert_allclose(exponent_quadrature(m, z), closed, rtol=1e-5)


def test_tempered_spline_matches_direct():
    m = isotropic_stable(1, 1.2, tempering=Tempering.polynomial(4))
    for a in (1e-3, 0.37, 2.9, 55.0):
        assert float(m.psi(a)) == pytest.approx(m.psi_direct(a), rel=1e-6)


def test_tempered_small_frequency_is_quadratic():
    # finite second moment: psi(a) ~ -a^2/2 int s^(1-alpha) qbar(s) ds
    m = isotropic_stable(1, 1.2, tempering=Tempering.polynomial(4))
    second, _ = integrate.quad(lambda s: s ** (1 - 1.2) / (1 + s ** 4), 0, np.inf)
    a = 1e-3
    assert m.psi_direct(a) == pytest.approx(-0.5 * a * a * second, rel=1e-5)


def test_tail_mass_and_covariance_closed_forms():
    alpha, delta = 1.2, 0.4
    m = isotropic_stable(1, alpha)
    total = m.spectral.total_mass
    assert tail_mass(m, delta) == pytest.approx(total * delta ** -alpha / alpha, rel=1e-10)
    cov = small_jump_covariance(m, delta)
    assert cov[0, 0] == pytest.approx(total * delta ** (2 - alpha) / (2 - alpha), rel=1e-9)


def test_tempered_tail_mass_against_quad():
    m = isotropic_stable(1, 0.8, tempering=Tempering.polynomial(4))
    ref, _ = integrate.quad(lambda s: s ** -1.8 / (1 + s ** 4), 0.3, np.inf)
    assert tail_mass(m, 0.3) == pytest.approx(m.spectral.total_mass * ref, rel=1e-9)


@given(st.floats(0.3, 1.9), st.floats(0.01, 50.0), st.floats(0.1, 10.0))
def test_untempered_exponent_scaling(alpha, z, lam):
    m = isotropic_stable(1, alpha)
    lhs = exponent(m, lam * z)
    assert lhs == pytest.approx(lam ** alpha * exponent(m, z), rel=1e-10)
    assert exponent(m, -z) == exponent(m, z) <= 0


@given(st.floats(1e-3, 200.0))
def test_tempered_exponent_below_untempered(a):
    base = isotropic_stable(1, 1.2)
    temp = isotropic_stable(1, 1.2, tempering=Tempering.polynomial(4))
    assert exponent(base, a) <= exponent(temp, a) <= 0


def test_large_jump_radius_law():
    alpha, delta = 1.2, 0.5
    m = isotropic_stable(1, alpha)
    J = sample_large_jump(m, delta, np.random.default_rng(3), 200_000)
    r = np.abs(J[:, 0])
    assert r.min() >= delta * (1 - 1e-12)
    frac = np.mean(r > 2 * delta)
    p = 2 ** -alpha
    assert abs(frac - p) < 5 * math.sqrt(p * (1 - p) / r.size)
    assert abs(np.mean(J[:, 0] > 0) - 0.5) < 0.01


def test_product_model_exponent():
    m = product_stable(2, 1.5)
    z = np.array([[0.3, -1.1]])
    np.testing.assert_allclose(exponent(m, z), -(0.3 ** 1.5 + 1.1 ** 1.5), rtol=1e-10)


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        isotropic_stable(1, 2.5)
    with pytest.raises(ConfigurationError):
        tail_mass(isotropic_stable(1, 1.0), 0.0)


def test_assumptions_reject_drift_below_one():
    m = isotropic_stable(1, 0.8)
    bad = make_coefficients(1, {"family": "constant", "value": 1.0},
                            {"family": "sinusoidal", "amplitude": 0.5, "frequency": 1.0})
    rep = validate_assumptions(m, bad)
    assert not rep.all_passed
    assert [c.name for c in rep.failures()] == ["H3"]
    good = make_coefficients(1, {"family": "holder", "a": 1.0, "b": 0.5, "eta": 0.5})
    assert validate_assumptions(m, good).all_passed


def test_relativistic_tempering_is_bessel():
    m = relativistic_stable(1, 1.5)
    nu = 1.25
    s = np.array([0.5, 2.0, 10.0])
    ref = special.kv(nu, s) * s ** nu / (special.gamma(nu) * 2 ** (nu - 1))
    np.testing.assert_allclose(m.tempering(s), ref, rtol=1e-6)
