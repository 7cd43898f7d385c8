import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from kacrice.gaussian_core import (
    CallableCovariance,
    ExtendedReal,
    FractionalCovariance,
    GaussianCovariance,
    LogDivergentCovariance,
    SincCovariance,
    TableCovariance,
    abs_hermite_coeffs,
    gauss_hermite_1d,
    gauss_quadrature_2d,
    halfnorm_constant,
    hermite_eval,
    make_covariance,
    mehler_cross_moment,
    spectral_moment,
)

from oracles import FROZEN, hermite_by_derivative


# ---------------------------------------------------------------- Hermite


def test_hermite_base_cases():
    assert hermite_eval(0, 3.7) == 1.0
    assert hermite_eval(2, 2.0) == 3.0
    x = np.linspace(-3, 3, 7)
    assert np.allclose(hermite_eval(2, x), x * x - 1)


def test_hermite_matches_derivative_definition():
    assert hermite_eval(6, 1.3) == pytest.approx(FROZEN["hermite_6_at_1.3"], abs=1e-12)
    assert hermite_eval(6, 1.3) == pytest.approx(hermite_by_derivative(6, 1.3), abs=1e-12)


def test_hermite_cap():
    with pytest.raises(ValueError, match="order too large"):
        hermite_eval(10_000, 0.5)


@given(st.integers(0, 30), st.floats(-4, 4))
def test_hermite_matches_scipy(k, x):
    assert hermite_eval(k, x) == pytest.approx(special.eval_hermitenorm(k, x), rel=1e-10, abs=1e-10)


def test_mehler_examples():
    assert mehler_cross_moment(1, 1, 0.3) == pytest.approx(0.3)
    assert mehler_cross_moment(2, 3, 0.9) == 0.0
    assert mehler_cross_moment(3, 3, 0.5) == pytest.approx(0.75)


def test_hermite_orthogonality():
    for k in range(11):
        for l in range(11):
            got = gauss_hermite_1d(lambda x: hermite_eval(k, x) * hermite_eval(l, x), 40)
            assert got == pytest.approx(math.factorial(k) if k == l else 0.0, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 6), st.floats(-0.999, 0.999))
def test_mehler_consistency_by_quadrature(k, omega):
    got = gauss_quadrature_2d(lambda z, w: hermite_eval(k, z) * hermite_eval(k, w), omega)
    assert got == pytest.approx(mehler_cross_moment(k, k, omega), abs=1e-6)


# ---------------------------------------------------------- |x - m| series


def test_abs_coeffs_at_zero():
    a = abs_hermite_coeffs(0.0, 40).coefficients
    assert a[0] == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)
    assert a[1] == 0.0
    assert a[2] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)


def test_abs_coeffs_match_projection_oracle():
    for (k, m), want in FROZEN["abs_coeff"].items():
        got = abs_hermite_coeffs(m, 40).coefficients[k]
        assert got == pytest.approx(want, rel=1e-10, abs=1e-15), (k, m)


def test_abs_coeffs_needs_two_terms():
    with pytest.raises(ValueError):
        abs_hermite_coeffs(0.3, 1)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3))
def test_parseval_within_tail_bound(m):
    s = abs_hermite_coeffs(m, 40)
    deficit = (1 + m * m) - s.weighted_norm2()
    assert -1e-12 <= deficit <= s.tail_mass * (1 + 1e-6) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3))
def test_tail_mass_matches_reconstruction_error(m):
    """The L2(phi) error of the K=40 partial sum equals the reported tail mass."""
    s = abs_hermite_coeffs(m, 40)
    err = integrate.quad(lambda x: (abs(x - m) - s.evaluate(x)) ** 2 * np.exp(-x * x / 2) / math.sqrt(2 * math.pi),
                         -40, 40, points=[m], limit=400, epsabs=1e-13)[0]
    assert err == pytest.approx(s.tail_mass, rel=0.02)


# ------------------------------------------------------------ misc constants


def test_halfnorm_constants():
    assert halfnorm_constant(1) == pytest.approx(math.sqrt(2 / math.pi))
    assert halfnorm_constant(2) == pytest.approx(math.sqrt(math.pi / 2))
    assert halfnorm_constant(3) == pytest.approx(2 * math.sqrt(2 / math.pi))


def test_halfnorm_by_monte_carlo():
    rng = np.random.default_rng(5)
    for d in (2, 3):
        x = np.linalg.norm(rng.standard_normal((10**6, d)), axis=1)
        assert abs(x.mean() - halfnorm_constant(d)) < 4 * x.std() / 1000


def test_quadrature_2d_examples():
    assert gauss_quadrature_2d(lambda z, w: np.ones_like(z), 0.3) == pytest.approx(1.0, abs=1e-12)
    assert gauss_quadrature_2d(lambda z, w: z * w, 0.4) == pytest.approx(0.4, abs=1e-10)
    assert gauss_quadrature_2d(lambda z, w: np.abs(z) * np.abs(w), 0.0) == pytest.approx(2 / math.pi, abs=1e-8)


def test_quadrature_2d_errors():
    with pytest.raises(ValueError, match="degenerate Gaussian"):
        gauss_quadrature_2d(lambda z, w: z, 1.0)
    with pytest.raises(ValueError, match="nodes"):
        gauss_quadrature_2d(lambda z, w: z, 0.1, nodes=4)


# ---------------------------------------------------------- covariance models


def test_extended_real():
    assert float(ExtendedReal.inf()) == math.inf
    assert ExtendedReal.finite(2.0).is_finite
    with pytest.raises(ValueError):
        ExtendedReal.inf().require_finite()
    with pytest.raises(ValueError):
        ExtendedReal.finite(math.nan)


def test_spectral_moments_of_named_families():
    g = GaussianCovariance()
    assert spectral_moment(g, 0).value == 1.0
    assert spectral_moment(g, 2).value == pytest.approx(1.0)
    s = SincCovariance()
    assert spectral_moment(s, 2).value == pytest.approx(1 / 3)
    assert spectral_moment(s, 4).value == pytest.approx(1 / 5)


def test_infinite_moments():
    f = FractionalCovariance(alpha=0.4, scale=0.25)
    assert spectral_moment(f, 2).infinite
    assert spectral_moment(LogDivergentCovariance(), 4).infinite


def test_moment_mismatch_detected():
    wrong = CallableCovariance(lambda t: np.exp(-t * t / 2), tau_scale=1.0, lambda2=2.0, lambda4=3.0)
    wrong.approximate = False
    with pytest.raises(ValueError, match="moment mismatch"):
        spectral_moment(wrong, 2)


@pytest.mark.parametrize("model", [
    GaussianCovariance(scale=0.7),
    SincCovariance(bandwidth=1.3),
    make_covariance("cosine+noise", weight=0.3),
    FractionalCovariance(alpha=0.6, scale=0.5),
])
def test_covariance_invariants(model):
    tau = np.linspace(-8, 8, 4001)
    r = np.asarray(model(tau))
    assert np.all(np.abs(r) <= model.lambda0.value * (1 + 1e-12))
    assert np.allclose(r, np.asarray(model(-tau)))
    if model.lambda2.is_finite:
        assert model(0.0, 1) == pytest.approx(0.0, abs=1e-12)
        assert -model(0.0, 2) == pytest.approx(model.lambda2.value, rel=1e-9)


@pytest.mark.parametrize("model", [GaussianCovariance(), SincCovariance(), FractionalCovariance(alpha=0.7)])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_derivatives_against_differences(model, order):
    tau = np.linspace(0.3, 4, 9)
    h = 1e-4
    num = (np.asarray(model(tau + h, order - 1)) - np.asarray(model(tau - h, order - 1))) / (2 * h)
    assert np.allclose(model(tau, order), num, rtol=1e-6, atol=1e-7)


def test_small_lag_helpers_are_accurate():
    for model in (GaussianCovariance(), SincCovariance()):
        tau = 1e-6
        assert float(model.one_minus_r(tau)) == pytest.approx(model.lambda2.value * tau**2 / 2, rel=1e-6)
        assert float(model.d2_increment(tau)) == pytest.approx(model.lambda4.value * tau**2 / 2, rel=1e-5)


def test_table_covariance_is_flagged_and_close():
    dt = 0.01
    t = np.arange(0, 8, dt)
    tab = TableCovariance(dt, np.exp(-t * t / 2))
    assert tab.approximate
    assert tab(0.537) == pytest.approx(math.exp(-0.537**2 / 2), abs=1e-9)
    assert tab(0.537, 2) == pytest.approx((0.537**2 - 1) * math.exp(-0.537**2 / 2), abs=1e-5)


def test_log_divergent_model_shape():
    m = LogDivergentCovariance()
    tau = np.array([1e-3, 1e-2, 0.1])
    assert np.allclose(m.d2_increment(tau), m.c / np.log(1 / tau))
    with pytest.raises(ValueError):
        m(0.9)
