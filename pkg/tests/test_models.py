import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from periodic_cns.errors import ConfigError, DomainError
from periodic_cns.models import (BoundaryData, CutoffFunction, FrictionPenalty,
                                 HardSpherePressure, PressurePotential, RegularizedPressure,
                                 VelocityExtension, ViscosityModel, build_cutoff)


@pytest.fixture
def p():
    return HardSpherePressure(1.0, 3.0, 1.0)


@pytest.fixture
def preg(p):
    return RegularizedPressure(p, 0.1, 4.0)


# -- hard-sphere pressure ------------------------------------------------------

def test_pressure_values(p):
    assert p.pressure(0.0) == 0.0
    assert p.pressure(0.5) == pytest.approx(4.0, rel=1e-15)


def test_pressure_domain(p):
    with pytest.raises(DomainError):
        p.pressure(1.0)
    with pytest.raises(DomainError):
        p.pressure(-0.1)
    with pytest.raises(ConfigError):
        HardSpherePressure(beta=2.5)


def test_pressure_monotone_on_grid(p):
    rho = np.linspace(0, 1, 1002)[1:-1]
    assert np.all(np.diff(p.pressure(rho)) > 0)
    assert np.all(p.pressure(rho) > 0)


def test_pressure_singular_growth(p):
    rho = 1 - 2.0 ** -np.arange(4, 21)
    scaled = (1 - rho) ** p.beta * p.pressure(rho)
    assert scaled.min() > 0.5 * p.amplitude


def test_dpressure_matches_finite_difference(p):
    rho = np.linspace(0.05, 0.9, 30)
    h = 1e-6
    fd = (p.pressure(rho + h) - p.pressure(rho - h)) / (2 * h)
    np.testing.assert_allclose(p.dpressure(rho), fd, rtol=1e-7)


# -- regularized pressure --------------------------------------------------------

def test_regularized_first_branch(preg):
    assert preg.pressure(0.5) == pytest.approx(4.025, rel=1e-14)


def test_regularized_second_branch_by_hand(preg):
    # (1.1 - 0.9)^4 + p(0.9) + p'(0.9) * 0.2 + 0.1 * 1.21, with p(0.9) = 900,
    # p'(0.9) = 1000 + 3 * 0.9 * 10^4 = 28000
    expected = 0.2 ** 4 + 900.0 + 28000.0 * 0.2 + 0.121
    assert preg.pressure(1.1) == pytest.approx(expected, rel=1e-12)


def test_regularized_junction(preg, p):
    rj = preg.junction
    right = (0.0 ** 4 + p.pressure(rj) + p.dpressure(rj) * 0.0 + preg.delta * rj ** 2)
    assert abs(preg.pressure(rj) - right) <= 1e-12 * right
    # second-order one-sided differences from each branch
    h = 1e-5
    f = preg.pressure
    left = (3 * f(rj) - 4 * f(rj - h) + f(rj - 2 * h)) / (2 * h)
    rightd = (-3 * f(rj) + 4 * f(rj + h) - f(rj + 2 * h)) / (2 * h)
    assert abs(left - rightd) <= 1e-6 * abs(rightd)
    assert preg.dpressure(rj - 1e-14) == pytest.approx(preg.dpressure(rj + 1e-14), rel=1e-9)


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_regularized_monotone_and_bounded_below(a, b):
    preg = RegularizedPressure(HardSpherePressure(), 0.1, 4.0)
    lo, hi = sorted((a, b))
    if hi > lo:
        assert preg.pressure(hi) > preg.pressure(lo)
    assert preg.pressure(a) >= 0.1 * a ** 2


def test_regularized_converges_to_base_as_delta_halves(p):
    rho = np.linspace(0.0, 0.7, 20)
    errs = [np.max(np.abs(RegularizedPressure(p, d).pressure(rho) - p.pressure(rho)))
            for d in (0.2, 0.1, 0.05)]
    np.testing.assert_allclose(errs, [d * 0.49 for d in (0.2, 0.1, 0.05)], rtol=1e-12)


def test_regularized_rejects_bad_parameters(p):
    with pytest.raises(ConfigError):
        RegularizedPressure(p, 0.6)
    with pytest.raises(ConfigError):
        RegularizedPressure(p, 0.1, 2.0)
    with pytest.raises(DomainError):
        RegularizedPressure(p, 0.1).pressure(-1.0)


# -- pressure potential ------------------------------------------------------------

@pytest.mark.parametrize("which", ["plain", "regularized"])
def test_potential_identity_finite_difference(p, preg, which):
    law = p if which == "plain" else preg
    pot = PressurePotential(law, 0.01)
    rho = np.geomspace(1e-3, 0.9, 50)
    h = 1e-5
    lhs = (pot(rho + h) - pot(rho - h)) / (2 * h) * rho - pot(rho)
    np.testing.assert_allclose(lhs, law.pressure(rho), rtol=1e-4)


def test_potential_matches_adaptive_quadrature(preg):
    pot = PressurePotential(preg, 0.01)
    for rho in (0.003, 0.2, 0.5, 0.89, 0.95, 1.3, 2.0):
        assert pot(rho) == pytest.approx(pot.by_quadrature(rho), rel=1e-10, abs=1e-13)


def test_potential_reference_and_vacuum(preg):
    pot = PressurePotential(preg, 0.3)
    assert pot(0.3) == 0.0
    assert pot(0.0) == 0.0
    assert pot.by_quadrature(0.3) == 0.0


def test_potential_convex(preg):
    pot = PressurePotential(preg, 0.01)
    rho = np.linspace(1e-3, 1.5, 400)
    assert np.min(np.diff(pot(rho), 2)) >= -1e-8


def test_potential_derivatives(preg):
    pot = PressurePotential(preg, 0.01)
    rho = np.linspace(0.05, 1.2, 40)
    np.testing.assert_allclose(pot.rho_derivative(rho), rho * pot.derivative(rho), rtol=1e-12)
    h = 1e-6
    fd = (pot.derivative(rho + h) - pot.derivative(rho - h)) / (2 * h)
    np.testing.assert_allclose(pot.second_derivative(rho), fd, rtol=1e-5)


def test_potential_nonnegative_above_reference(preg):
    pot = PressurePotential(preg, 0.01)
    assert np.all(pot(np.linspace(0.01, 2.0, 300)) >= 0)


# -- friction and stress ------------------------------------------------------------

def test_friction_examples():
    f = FrictionPenalty(10.0, 1.0)
    assert f(1.0) == 0.0
    assert f(2.0) == 5.0
    assert f(1.5) == 0.0


@given(st.floats(0, 1e3), st.floats(0, 10), st.floats(0, 10))
def test_friction_properties(lam, a, b):
    f = FrictionPenalty(lam, 1.0)
    assert f(min(a, 1.5)) == 0.0
    lo, hi = sorted((a, b))
    assert f(hi) >= f(lo)
    assert f(hi) - f(lo) <= lam * (hi - lo) * (1 + 1e-12) + 1e-12
    assert FrictionPenalty(2 * lam, 1.0)(a) == pytest.approx(2 * f(a))


def test_stress_examples():
    v = ViscosityModel(mu=0.7, eta=0.3)
    np.testing.assert_array_equal(v.stress(np.array([[0.0, 1.0], [-1.0, 0.0]])), 0.0)
    np.testing.assert_allclose(ViscosityModel(1.0, 0.0).stress(np.eye(2)), 0.0, atol=1e-15)


@given(arrays(float, (2, 2), elements=st.floats(-1e3, 1e3)),
       st.floats(1e-3, 10), st.floats(0, 10))
def test_stress_dissipative_and_symmetric(g, mu, eta):
    v = ViscosityModel(mu, eta)
    s = v.stress(g)
    np.testing.assert_allclose(s, s.T)
    assert v.dissipation(g) >= -1e-9 * (1 + np.sum(g ** 2))


def test_stress_random_samples():
    g = np.random.default_rng(0).normal(size=(10_000, 2, 2))
    assert np.all(ViscosityModel(0.1, 0.05).dissipation(g) >= -1e-14)


# -- cutoff ------------------------------------------------------------------------

def test_cutoff_values():
    c = build_cutoff(1.0, 0.1)
    assert c(0.0) == 1.0 and c(1.0) == 1.0
    assert c(0.2) == 0.0                       # dist = 2 omega
    y = np.linspace(0, 0.025, 20)
    np.testing.assert_array_equal(c(y), 1.0)   # collar of width omega/4
    assert np.all(np.abs(c(np.linspace(0, 1, 1001))) <= 1.0)


def test_cutoff_rejects_width():
    for w in (0.0, 0.5, 0.7, -0.1):
        with pytest.raises(ConfigError):
            build_cutoff(1.0, w)


def test_cutoff_jet_matches_finite_differences():
    c = CutoffFunction(0.2, 1.0)
    y = np.linspace(0.01, 0.99, 97)
    h = 1e-5
    d, d1, d2, d3 = c.jet(y)
    dp, dm = c.jet(y + h), c.jet(y - h)
    for k in range(3):
        fd = (dp[k] - dm[k]) / (2 * h)
        np.testing.assert_allclose(c.jet(y)[k + 1], fd, atol=2e-4 * (1 / 0.15) ** (k + 1))


def test_cutoff_scale_invariant_bounds():
    # dist |d'| and dist^2 |d''| stay bounded by the same constant as omega halves
    consts = []
    for w in (0.2, 0.1, 0.05):
        c = CutoffFunction(w, 1.0)
        y = np.linspace(1e-4, 0.5, 20001)
        _, d1, d2, _ = c.jet(y)
        dist = c.distance(y)
        consts.append((np.max(dist * np.abs(d1)), np.max(dist ** 2 * np.abs(d2))))
    consts = np.array(consts)
    np.testing.assert_allclose(consts, np.broadcast_to(consts[0], consts.shape), rtol=1e-3)


# -- boundary data and extension --------------------------------------------------------

@pytest.fixture
def ext():
    data = BoundaryData()
    return VelocityExtension(CutoffFunction(0.125, 1.0), data, ViscosityModel(0.1, 0.0))


def test_data_periodic_in_time():
    d = BoundaryData(period=0.7)
    x = np.linspace(0, 1, 17)
    for t in (0.0, 0.3, 1.1):
        np.testing.assert_allclose(d.w_B(t + d.period, x), d.w_B(t, x), atol=1e-14)
        np.testing.assert_allclose(d.rho_B(t + d.period, x), d.rho_B(t, x), atol=1e-14)


def test_data_validation():
    with pytest.raises(ConfigError, match="rho_B < rho_max"):
        BoundaryData(rho_b=0.9, rho_b_amplitude=0.2).validate(1.0)
    with pytest.raises(ConfigError):
        BoundaryData(alpha=-1).validate(1.0)
    BoundaryData().validate(1.0)


def test_v_B_symmetric_gradient_psd(ext):
    g = ext.evaluate(0.0, 0.3, 0.5).grad      # in the core d = 0, so grad u_B = grad v_B
    sym = 0.5 * (g + g.T)
    assert np.linalg.eigvalsh(sym).min() >= 0
    assert ext.evaluate(0.0, 0.3, 0.5).div == pytest.approx(ext.data.alpha)


def test_extension_trace_on_walls(ext):
    x = np.linspace(0, 1, 33)
    data = ext.data
    for yw in (0.0, 1.0):
        for t in (0.0, 0.4):
            u = ext.evaluate(t, x, np.full_like(x, yw)).u
            w, wx = data.stream_jet(t, x)[:2]
            np.testing.assert_allclose(u[0], 0.0, atol=1e-15)       # -d_y w_B = 0
            np.testing.assert_allclose(u[1], wx + data.alpha * (yw + data.inflow_offset))


def test_extension_divergence_equals_div_v_B(ext):
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0, 1, 200), rng.uniform(0, 1, 200)
    np.testing.assert_allclose(ext.evaluate(0.2, x, y).div, ext.data.alpha, atol=1e-12)


def test_extension_derivatives_match_finite_differences(ext):
    rng = np.random.default_rng(2)
    x, y, t = rng.uniform(0, 1, 50), rng.uniform(0.01, 0.99, 50), 0.37
    f = ext.evaluate(t, x, y)
    h = 1e-5
    scale = np.max(np.abs(f.grad))
    for j, (dx, dy) in enumerate(((h, 0), (0, h))):
        fd = (ext.evaluate(t, x + dx, y + dy).u - ext.evaluate(t, x - dx, y - dy).u) / (2 * h)
        np.testing.assert_allclose(f.grad[:, j], fd, atol=1e-4 * scale)
    fd_t = (ext.evaluate(t + h, x, y).u - ext.evaluate(t - h, x, y).u) / (2 * h)
    np.testing.assert_allclose(f.dt_u, fd_t, atol=1e-4 * np.max(np.abs(f.dt_u)))
    # div S(grad u_B) against a nested finite difference of the stress
    mu = ext.viscosity.mu
    h2 = 1e-4

    def stress(xx, yy):
        return ext.viscosity.stress(np.moveaxis(ext.evaluate(t, xx, yy).grad, (0, 1), (-2, -1)))

    div_s = ((stress(x + h2, y) - stress(x - h2, y))[..., :, 0]
             + (stress(x, y + h2) - stress(x, y - h2))[..., :, 1]) / (2 * h2)
    ref = np.moveaxis(div_s, -1, 0)
    np.testing.assert_allclose(f.div_stress, ref, atol=1e-4 * max(1.0, np.max(np.abs(ref))))
    assert mu > 0


def test_inflow_outflow_partition(ext):
    from periodic_cns.discretization import ChannelDomain, boundary_partition, build_spaces
    sp = build_spaces(ChannelDomain(), 4)
    for t in (0.0, 0.25, 0.5):
        inflow, outflow = boundary_partition(sp, ext, t)
        assert np.all(inflow ^ outflow)
        assert inflow.any() and outflow.any()
