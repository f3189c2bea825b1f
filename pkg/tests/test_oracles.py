"""Pinned reference values: closed forms, analytic integrals and substitutions."""
import math

import numpy as np
import pytest
from scipy import integrate

from tsparametrix import (ConvolutionScheme, QProfile, SimConfig, SpaceGrid, SpectralMeasure, Tempering,
                          compare, constant_coefficients, convolve, density, dirac_probe, empirical_density,
                          exponent, flow_map, frozen_density_grid, frozen_density_point, hbar,
                          holder_coefficients, isotropic_stable, kernel_H, make_coefficients, pbar, plow,
                          relativistic_stable, series, simulate, small_jump_covariance, smoothing_integral,
                          tail_mass, validate_assumptions)
from tsparametrix.bounds import sandwich_constants, semigroup_constant, singular_factor
from tsparametrix.flow import transported_distance
from tsparametrix.frozen import default_grid, frozen_exponent
from tsparametrix.levy import AllSpace, Cone, LevyModel, LowerBound, ball_mass, sample_radius
from tsparametrix.parametrix import evaluator


def unit_stable(alpha=1.0, tempering=None):
    """nu(dz) = dz / |z|^(1 + alpha) on the line (C = 1 on each side)."""
    temp = Tempering.none() if tempering is None else tempering
    return LevyModel(1, alpha, SpectralMeasure.atomic([[1.0], [-1.0]], [1.0, 1.0]), temp)


def cauchy(z, scale):
    return scale / (np.pi * (scale ** 2 + z ** 2))


# -- driver -----------------------------------------------------------------

def test_exponent_values():
    assert exponent(relativistic_stable(1, 1.0), math.sqrt(3.0)) == pytest.approx(-1.0, rel=1e-12)
    for m in (isotropic_stable(1, 1.2), relativistic_stable(1, 1.5), unit_stable(0.7, Tempering.polynomial(4))):
        assert exponent(m, 0.0) == 0.0
    from tsparametrix.levy import exponent_quadrature
    m = isotropic_stable(1, 1.0, c=2.5)
    z = np.array([0.5, 1.0, 4.0])
    np.testing.assert_allclose(exponent_quadrature(m, z), -2.5 * z, rtol=1e-6)


def test_tail_mass_values():
    assert tail_mass(unit_stable(1.0), 1.0) == pytest.approx(2.0, rel=1e-12)
    m = unit_stable(1.2, Tempering.polynomial(4))
    vals = [tail_mass(m, d) for d in (0.5, 1.0, 10.0, 100.0, 1e4)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-15
    rep = validate_assumptions(isotropic_stable(1, 1.2), constant_coefficients(1))
    c_tail = rep["HLB"].measured["tail_constant"]
    m = isotropic_stable(1, 1.2)
    for d in (0.01, 0.3, 1.0):
        assert tail_mass(m, d) <= c_tail / d ** 1.2 * (1 + 1e-12)


def test_ball_mass_values():
    m = unit_stable(1.0)
    on_ray = ball_mass(m, [2.0], 0.1)
    assert on_ray.value > 0 and not on_ray.support_miss
    assert ball_mass(m, [2.0], 0.5).value == pytest.approx(1 / 1.5 - 1 / 2.5, rel=1e-10)
    line = LevyModel(2, 1.5, SpectralMeasure.atomic([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0]), gamma=1.0,
                     flavor="H1b", tempering=Tempering("none", doubling_constant=1.0))
    miss = ball_mass(line, [0.0, 3.0], 1.0)
    assert miss.value == 0.0 and miss.support_miss


def test_radius_sampler_values():
    rng = np.random.default_rng(11)
    m = unit_stable(1.2)
    r = sample_radius(m, 0.5, rng, 100_000)
    emp = np.sort(r)
    cdf = 1 - (0.5 / emp) ** 1.2
    ks = np.max(np.abs(cdf - np.arange(1, emp.size + 1) / emp.size))
    assert ks < 0.01
    rt = sample_radius(unit_stable(1.2, Tempering.polynomial(4)), 0.5, np.random.default_rng(11), 100_000)
    assert rt.mean() < r.mean()
    from tsparametrix import sample_large_jump
    J = sample_large_jump(m, 0.5, rng, 1000)
    assert set(np.unique(np.sign(J[:, 0]))) == {-1.0, 1.0}


def test_small_jump_covariance_values():
    assert small_jump_covariance(unit_stable(1.0), 1.0)[0, 0] == pytest.approx(2.0, rel=1e-12)
    line = LevyModel(2, 1.5, SpectralMeasure.atomic([[1.0, 0.0], [-1.0, 0.0]], [1.0, 1.0]), gamma=1.0,
                     flavor="H1b", tempering=Tempering("none", doubling_constant=1.0))
    cov = small_jump_covariance(line, 1.0)
    assert np.linalg.matrix_rank(cov) == 1 and cov[0, 1] == cov[1, 0] == cov[1, 1] == 0.0
    m3 = isotropic_stable(3, 1.3)
    cov3 = small_jump_covariance(m3, 0.7)
    total = m3.spectral.total_mass * m3.radial_integral(0.0, 0.7, 1.0 - 1.3)
    np.testing.assert_allclose(cov3, total / 3 * np.eye(3), rtol=1e-6, atol=1e-12)


def test_assumption_report_values():
    rep = validate_assumptions(isotropic_stable(1, 1.2, c=1.7), constant_coefficients(1))
    assert rep.all_passed
    assert rep["H4"].measured["kappa_measured"] == pytest.approx(1.0)
    assert rep["H2"].measured["K"] == pytest.approx(1.7, rel=1e-6)
    rel = validate_assumptions(relativistic_stable(1, 1.5), constant_coefficients(1))
    assert rel["H2"].measured["K"] > 0
    z = np.geomspace(1, 100, 200)
    assert np.min(((z ** 2 + 1) ** 0.75 - 1) / z ** 1.5) > 0


# -- flow -------------------------------------------------------------------

def test_flow_values():
    zero = constant_coefficients(1)
    assert flow_map(zero, np.array([0.7]), 0.0, 3.0)[0] == 0.7
    lin = make_coefficients(1, None, {"family": "linear", "matrix": 1.0, "offset": 0.0})
    assert flow_map(lin, np.array([1.0]), 0.0, 1.0, steps=100)[0] == pytest.approx(math.e, abs=1e-8)
    there = flow_map(lin, np.array([0.4]), 0.2, 1.3)
    assert flow_map(lin, there, 1.3, 0.2)[0] == pytest.approx(0.4, abs=1e-7)
    assert transported_distance(zero, 0.0, 1.0, 0.3, -1.2) == (1.5, 1.5)
    fwd, bwd = transported_distance(lin, 0.0, 1.0, 0.0, 1.0)
    assert fwd == pytest.approx(1.0) and bwd == pytest.approx(math.exp(-1), abs=1e-9)
    for x, y in ((0.0, 1.0), (2.0, -1.0), (0.5, 0.6)):
        f, b = transported_distance(lin, 0.0, 0.7, x, y)
        assert math.exp(-0.7) - 1e-12 <= f / b <= math.exp(0.7) + 1e-12


# -- frozen density ---------------------------------------------------------

def test_frozen_exponent_values(holder_model):
    m, c = holder_model
    p = np.array([0.0, 0.3, 2.0])
    const = constant_coefficients(1)
    np.testing.assert_allclose(frozen_exponent(m, const, 0.0, 0.7, 1.0, 0.0, p), 0.7 * exponent(m, p),
                               rtol=1e-10, atol=0)
    assert frozen_exponent(m, c, 0.0, 0.7, 1.0, 0.3, 0.0) == 0.0
    m1 = isotropic_stable(1, 1.0, c=1.5)
    tv = make_coefficients(1, {"family": "time_linear", "a": 1.0, "b": 1.0})
    got = frozen_exponent(m1, tv, 0.2, 0.9, 1.0, 0.0, p)
    np.testing.assert_allclose(got, -1.5 * np.abs(p) * (0.7 + 0.5 * (0.81 - 0.04)), rtol=1e-9)


def test_frozen_grid_values():
    m = isotropic_stable(1, 1.0)
    c = constant_coefficients(1)
    g = default_grid(m, c, 0.0, 1.0, [0.0])
    f = frozen_density_grid(m, c, 0.0, 1.0, 1.0, 0.0, 0.0, g)
    k = g.index_of(0.0)[0]
    assert f.values[k] == pytest.approx(1 / np.pi, abs=1e-4)
    np.testing.assert_allclose(f.values[1:], f.values[1:][::-1], atol=1e-8)
    assert f.mass + f.meta["tail_estimate"] == pytest.approx(1.0, abs=5e-3)
    assert f.mass == pytest.approx(1.0, abs=5e-3)


def test_frozen_point_values(holder_model):
    m = isotropic_stable(1, 1.0)
    c = constant_coefficients(1)
    assert frozen_density_point(m, c, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0) == pytest.approx(1 / (2 * np.pi), abs=1e-4)
    mh, ch = holder_model
    q = QProfile.for_model(mh, ch)
    g = default_grid(mh, ch, 0.0, 0.5, [0.0])
    far = 10 * g.nodes()[-1, 0]
    assert frozen_density_point(mh, ch, 0.0, 0.5, 0.5, 0.2, 0.0, far) <= pbar(mh, ch, q, 0.0, 0.5, 0.0, far)
    f = frozen_density_grid(mh, constant_coefficients(1, 1.2), 0.0, 0.5, 0.5, 0.0, 0.0, g)
    assert frozen_density_point(mh, constant_coefficients(1, 1.2), 0.0, 0.5, 0.5, 0.0, 0.0, 0.0) == \
        pytest.approx(f.values.max(), rel=1e-6)


def test_dirac_probe_values(holder_model):
    m, _ = holder_model
    c = constant_coefficients(1, 1.1)
    g = SpaceGrid.line(0.0, 8.0, 1024)
    one = dirac_probe(m, c, lambda y: np.ones_like(np.asarray(y)), 0.0, 0.0, 0.2, g)
    assert one.value == pytest.approx(1.0, abs=5e-3)
    ch = holder_coefficients(1, 1.0, 0.5, 0.5)
    bump = lambda y: np.exp(-(np.asarray(y) - 4.0) ** 2 / 0.1)
    vals = [dirac_probe(m, ch, bump, 0.0, 0.0, tau, SpaceGrid.line(0.0, 8.0, 2048)).value
            for tau in (0.2, 0.05, 0.0125)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-3


# -- bounds -----------------------------------------------------------------

def test_pbar_values():
    m = isotropic_stable(1, 1.0)
    c = constant_coefficients(1)
    q = QProfile.for_model(m, c)
    assert pbar(m, c, q, 0.0, 0.3, 0.5, 0.5) == pytest.approx(0.3 ** -1.0)
    assert pbar(m, c, q, 0.0, 1.0, 0.0, 3.0) == pytest.approx(0.0625)
    far = np.array([1e4, 1e5])
    v = pbar(m, c, q, 0.0, 1.0, 0.0, far)
    assert np.log(v[1] / v[0]) / np.log(10) == pytest.approx(-2.0, abs=1e-3)


def test_hbar_values():
    m = isotropic_stable(1, 1.5)
    c = make_coefficients(1, {"family": "holder", "a": 1.0, "b": 0.5, "eta": 0.5},
                          {"family": "sinusoidal", "amplitude": 0.3, "frequency": 1.0})
    q = QProfile.for_model(m, c)
    y = 0.7
    assert hbar(m, c, q, 0.0, 0.4, y, y) == pytest.approx(0.4 ** (-1 / 1.5) * pbar(m, c, q, 0.0, 0.4, y, y))
    m1 = isotropic_stable(1, 1.2)
    ch = holder_coefficients(1, 1.0, 0.5, 0.5)
    for tau in (0.1, 0.01):
        diag = tau ** (1 / 1.2)
        assert singular_factor(m1, ch, 0.0, tau, diag) == pytest.approx(tau ** (0.5 / 1.2 - 1), rel=1e-12)
    cst = constant_coefficients(1, 1.3)
    qc = QProfile.for_model(m1, cst)
    for x, y in ((0.0, 0.0), (0.0, 2.0)):
        assert abs(kernel_H(m1, cst, 0.0, 0.5, x, y)) <= 1e-6 * hbar(m1, cst, qc, 0.0, 0.5, x, y) + 1e-300


def test_plow_values():
    m = relativistic_stable(1, 1.5)
    c = constant_coefficients(1)
    for y in (0.0, 3.0, -40.0):
        assert plow(m, c, 0.0, 0.5, 0.0, y).applicable
    assert plow(m, c, 0.0, 0.5, 0.0, 0.0).value == pytest.approx(0.5 ** (-1 / 1.5))
    cone = isotropic_stable(1, 1.2, lower_bound=LowerBound(Tempering.none(), Cone(np.array([1.0]), 0.3)))
    low = plow(cone, c, 0.0, 0.1, 0.0, -2.0)
    assert not low.applicable and low.value == 0.0
    assert isinstance(AllSpace(), AllSpace)


def test_smoothing_values():
    m = isotropic_stable(1, 1.0)
    c = holder_coefficients(1, 1.0, 0.5, 0.5)
    q = QProfile.for_model(m, c)
    assert abs(smoothing_integral(m, c, q, 0.0, 0.25, 0.0).fitted_omega - 0.5) <= 0.1
    assert smoothing_integral(m, c, q, 0.0, 0.25, 0.0, delta_h=0.0).value == 0.0
    # borderline alpha + gamma - d = eta (alpha ^ 1): value / (tau - t) grows like |log(tau - t)|
    mb = isotropic_stable(1, 0.5)
    cb = holder_coefficients(1, 1.0, 0.5, 1.0)
    res = smoothing_integral(mb, cb, QProfile.for_model(mb, cb), 0.0, 0.25, 0.0, ladder=(4, 6, 8, 10, 12))
    growth = res.values / res.elapsed
    per_log = growth / np.abs(np.log(res.elapsed))
    assert np.all(np.diff(growth) > 0)
    assert per_log.max() / per_log.min() < 1.2


def test_sandwich_values():
    v = np.array([0.3, 1.2, 4.0])
    assert sandwich_constants(v, v)[0] == 1.0
    m = isotropic_stable(1, 1.0)
    c = constant_coefficients(1)
    q = QProfile.for_model(m, c)
    consts = []
    for n in (201, 401):
        ys = np.linspace(-50, 50, n)
        consts.append(sandwich_constants(cauchy(ys, 1.0), pbar(m, c, q, 0.0, 1.0, 0.0, ys))[0])
    assert np.isfinite(consts[0]) and 0.5 <= consts[1] / consts[0] <= 2
    k = semigroup_constant(m, c, q, 0.0, 0.5, 1.0, 0.0, np.linspace(-20, 20, 9))
    assert np.isfinite(k) and k > 0


def test_kernel_integral_structure(holder_model):
    # int pbar(t, tau, x, z) hbar(tau, T, z, y) dz <= C ((T-tau)^(w-1) + (tau-t)^(w-1) + cap/(T-t)) pbar(t, T, x, y)
    m, c = holder_model
    q = QProfile.for_model(m, c)
    t, T = 0.0, 0.5
    w = min(1 - 1 / m.alpha, c.eta * min(1.0, 1 / m.alpha))
    worst = []
    for ladder in ([0.05, 0.25, 0.45], [0.01, 0.05, 0.25, 0.45, 0.49]):
        ratio = 0.0
        for tau in ladder:
            for x, y in ((0.0, 0.0), (0.0, 1.0), (1.0, -3.0), (0.0, 20.0)):
                f = lambda z: pbar(m, c, q, t, tau, x, z) * hbar(m, c, q, tau, T, z, y)
                a, b = sorted((x, y))
                pieces = [(-np.inf, a), (a, b), (b, np.inf)] if b > a else [(-np.inf, a), (a, np.inf)]
                val = sum(integrate.quad(f, lo, hi, limit=400)[0] for lo, hi in pieces)
                rhs = ((T - tau) ** (w - 1) + (tau - t) ** (w - 1) + min(1.0, abs(y - x) ** 0.5) / (T - t))
                ratio = max(ratio, val / (rhs * pbar(m, c, q, t, T, x, y)))
        worst.append(ratio)
    assert np.isfinite(worst[1]) and worst[1] / worst[0] < 2


# -- series -----------------------------------------------------------------

def test_convolution_values():
    g = SpaceGrid.line(0.0, 4.0, 64)
    zero = convolve(lambda u: np.ones(64), lambda u: np.zeros(64), ConvolutionScheme(0.0, 1.0, 8, grid=g))
    assert float(zero) == 0.0


def test_series_state_values(holder_model):
    m, c = holder_model
    st = series(m, c, 0.0, 0.5, SpaceGrid.line(0.0, 25.6, 512))
    ax = st.grid.axes()[0]
    k = st.grid.index_of(1.0)[0]
    assert density(st, 0.0, ax[k]) == st.partial_sum.values[k]
    assert st.meta["mass_total"] == pytest.approx(1.0, abs=1e-2)
    lows = []
    for tau in (0.05, 0.1, 0.2):
        s = series(m, c, 0.0, tau, SpaceGrid.line(0.0, 12.8, 1024))
        lows.append(float(np.asarray(density(s, 0.0, 0.0)).ravel()[0]) * tau ** (1 / m.alpha))
    assert min(lows) > 0.1


# -- simulation -------------------------------------------------------------

def test_simulation_values():
    m = isotropic_stable(1, 1.2)
    frozen = simulate(m, constant_coefficients(1), [0.4], 0.0, 1.0,
                      SimConfig(n_paths=1000, delta=1e12, small_jumps="drop", block_count=2))
    assert np.all(frozen.terminal == 0.4)
    same = empirical_density(np.full(500, 0.3), SpaceGrid.line(0.0, 2.0, 32))
    assert np.count_nonzero(same.values) == 1
    u = np.random.default_rng(2).uniform(-1, 1, 200_000)
    flat = empirical_density(u, SpaceGrid.line(0.0, 0.9, 16), min_coverage=0.5)
    assert np.all(np.abs(flat.values - 0.5) <= 3 * flat.standard_errors + 1e-12)
    emp = empirical_density(u, SpaceGrid.line(0.0, 1.2, 32), min_coverage=0.5)
    rep = compare(emp.values, emp)
    assert np.all(rep.z[rep.bulk] == 0.0)


@pytest.fixture(scope="module")
def constant_sigma_reference():
    m = isotropic_stable(1, 1.2)
    c = constant_coefficients(1, 1.0)
    return m, c, evaluator(series(m, c, 0.0, 0.5, SpaceGrid.line(0.0, 25.6, 2048)))


def test_constant_sigma_monte_carlo(constant_sigma_reference):
    m, c, ref = constant_sigma_reference
    ens = simulate(m, c, [0.0], 0.0, 0.5, SimConfig(n_paths=1_000_000, seed=3, delta=0.2))
    assert compare(ref, empirical_density(ens, SpaceGrid.line(0.0, 25.6, 512))).passed(0.99)


def test_gaussian_cutoff_bias_at_characteristic_scale(constant_sigma_reference):
    # with the exact frozen density as reference, 10^6 paths resolve the small-jump bias at delta = tau
    m, c, ref = constant_sigma_reference
    ens = simulate(m, c, [0.0], 0.0, 0.5, SimConfig(n_paths=1_000_000, seed=3))
    rep = compare(ref, empirical_density(ens, SpaceGrid.line(0.0, 25.6, 512)))
    assert rep.fraction_within < 0.95 and rep.sup_z > 5


def test_tail_slopes_match_between_routes():
    m = isotropic_stable(1, 1.0)
    c = holder_coefficients(1, 1.0, 0.5, 0.5)
    st = series(m, c, 0.0, 1.0, SpaceGrid.line(0.0, 64.0, 512), filter_order=16)
    ens = simulate(m, c, [0.0], 0.0, 1.0, SimConfig(n_paths=1_000_000, delta=0.2, seed=4,
                                                   steps_per_unit_time=64))
    emp = empirical_density(ens, SpaceGrid.line(0.0, 128.0, 1024))
    rep = compare(evaluator(st), emp, tail_range=(5.0, 50.0))
    assert abs(rep.slope_reference + 2.0) <= 0.15
    assert abs(rep.slope_empirical + 2.0) <= 0.15
