import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kacrice.counting import count_crossings_1d
from kacrice.gaussian_core import (
    CosineCovariance,
    ExtendedReal,
    FractionalCovariance,
    GaussianCovariance,
    LogDivergentCovariance,
    SincCovariance,
    abs_hermite_coeffs,
    gauss_quadrature_2d,
    make_covariance,
)
from kacrice.rice import (
    DIVERGENT,
    FINITE,
    abs_product,
    conditional_abs_product,
    dislocation_density,
    expected_crossings,
    geman_condition,
    localtime_second_moment,
    nodal_length_density,
    rectangle_distance_kernel,
    regression_quantities,
    second_factorial_moment,
    variance_crossings,
)
from kacrice.rng import derive_seed
from kacrice.sampler import simulate_stationary_1d

from oracles import FROZEN, abs_product_arcsine

# ------------------------------------------------------------ first moment


def test_expected_crossings_examples():
    assert float(expected_crossings(1, 1, 0, math.pi)) == pytest.approx(1.0, abs=1e-15)
    assert float(expected_crossings(1, 1, 0, 1)) == pytest.approx(1 / math.pi, abs=1e-15)
    assert expected_crossings(1, math.inf, 0, 1).infinite
    assert expected_crossings(1, ExtendedReal.inf(), 0.5, 1).infinite


def test_expected_crossings_tail_is_monotone():
    vals = [float(expected_crossings(1, 1, y, 1)) for y in np.linspace(0, 40, 81)]
    assert all(a > b or b == 0 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 0.0


def test_expected_crossings_errors():
    with pytest.raises(ValueError):
        expected_crossings(0, 1, 0, 1)
    with pytest.raises(ValueError):
        expected_crossings(1, 1, 0, 0)


@given(st.floats(0.1, 10), st.floats(0.01, 10), st.floats(-5, 5), st.floats(0.01, 100), st.floats(0.01, 10))
def test_expected_crossings_symmetry_and_scaling(l0, l2, y, t, c):
    base = float(expected_crossings(l0, l2, y, t))
    assert float(expected_crossings(l0, l2, -y, t)) == base
    assert float(expected_crossings(l0, c * c * l2, y, t)) == pytest.approx(c * base, rel=1e-12, abs=1e-300)


# ------------------------------------------------------------ densities


def test_densities():
    assert dislocation_density(1.0) == pytest.approx(1 / (2 * math.pi))
    assert dislocation_density(50.0) == pytest.approx(7.9577, abs=1e-4)
    assert dislocation_density(0.0) == 0.0
    assert nodal_length_density(1.0) == 0.5
    assert nodal_length_density(4.0) == 1.0
    assert nodal_length_density(0.0) == 0.0


# ---------------------------------------------------------- Geman verdicts


@pytest.mark.parametrize("model,want", [
    (GaussianCovariance(), FINITE),
    (SincCovariance(), FINITE),
    (LogDivergentCovariance(), DIVERGENT),
    (make_covariance("cosine+noise", weight=0.3), FINITE),
    (GaussianCovariance(scale=0.3, variance=2.0), FINITE),
])
def test_geman_routes_agree(model, want):
    v = geman_condition(model)
    assert v.classification == want
    assert v.route_verdicts == (want, want)


def test_geman_finite_windows_are_cauchy():
    v = geman_condition(GaussianCovariance())
    partial = np.cumsum(v.windows)
    assert abs(partial[-1] - partial[-2]) < 1e-10 * partial[-1]


def test_geman_errors():
    with pytest.raises(ValueError, match="first moment already infinite"):
        geman_condition(FractionalCovariance(alpha=0.4))
    with pytest.raises(ValueError, match="purely discrete"):
        geman_condition(CosineCovariance())


# --------------------------------------------------- regression quantities


def test_sinc_mean_shift_limit():
    q = regression_quantities(SincCovariance(), np.array([1e-4, 1e-3]), y=1.0)
    assert q.m[0] == pytest.approx(-math.sqrt(5) / 2, rel=1e-6)


def test_zero_level_has_zero_shift():
    q = regression_quantities(GaussianCovariance(), np.linspace(0.01, 5, 50), y=0.0)
    assert np.all(q.m == 0)


def test_large_lag_limits():
    q = regression_quantities(GaussianCovariance(), np.array([30.0]))
    assert q.sigma2[0] == pytest.approx(1.0, abs=1e-12)
    assert q.rho[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("model", [GaussianCovariance(), SincCovariance(), make_covariance("cosine+noise", weight=0.3)])
def test_regression_invariants(model):
    tau = np.geomspace(1e-4, 20, 400)
    q = regression_quantities(model, tau, y=0.7)
    lam2 = model.lambda2.value / model.lambda0.value
    assert np.all(q.sigma2 > 0)
    assert np.all(q.sigma2 <= lam2 * (1 + 1e-9))
    assert np.all(np.abs(q.rho) <= 1)


def test_regression_errors():
    with pytest.raises(ValueError):
        regression_quantities(GaussianCovariance(), 0.0)
    with pytest.raises(ValueError, match="singular conditioning"):
        regression_quantities(make_covariance("cosine+noise", weight=1.0), 2 * math.pi)


# ------------------------------------------------- conditional |.| product


def test_abs_product_examples():
    assert conditional_abs_product(0.0, 0.0) == pytest.approx(2 / math.pi, abs=1e-12)
    assert conditional_abs_product(0.0, 0.5) == pytest.approx(abs_product_arcsine(0.5), abs=1e-12)
    a0 = abs_hermite_coeffs(1.3, 2).coefficients[0]
    assert conditional_abs_product(1.3, 0.0) == pytest.approx(a0 * a0, abs=1e-12)


def test_abs_product_matches_oracle():
    for (m, rho), want in FROZEN["abs_product"].items():
        assert conditional_abs_product(m, rho) == pytest.approx(want, rel=1e-10), (m, rho)
        assert abs_product(m, rho)[0] == pytest.approx(want, rel=1e-10), (m, rho)


def test_abs_product_degenerate():
    with pytest.raises(ValueError, match="degenerate"):
        conditional_abs_product(0.3, 1.0)


@settings(max_examples=80, deadline=None)
@given(st.floats(-3, 3), st.floats(-0.99, 0.99))
def test_series_matches_quadrature(m, rho):
    series = conditional_abs_product(m, rho, check=False)
    quad = gauss_quadrature_2d(lambda z, w: np.abs(z - m) * np.abs(w + m), rho, nodes=80, kinks_z=(m,), kinks_w=(-m,))
    assert series == pytest.approx(quad, abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-0.999, 0.999))
def test_abs_product_symmetry(m, rho):
    # exchanging Z and W turns E|Z - m||W + m| into E|Z + m||W - m|
    assert abs_product(-m, rho)[0] == pytest.approx(abs_product(m, rho)[0], rel=1e-10)


# ---------------------------------------------------- second moment of N


def test_m2_against_oracle():
    assert float(second_factorial_moment(GaussianCovariance(), 0.0, 1.0).value) == pytest.approx(
        FROZEN["m2_gaussian_y0_t1"], rel=1e-8)
    assert float(second_factorial_moment(GaussianCovariance(), 1.0, 1.0).value) == pytest.approx(
        FROZEN["m2_gaussian_y1_t1"], rel=1e-8)


def test_m2_vanishes_as_t_shrinks():
    vals = [float(second_factorial_moment(GaussianCovariance(), 0.0, t).value) for t in (1e-1, 1e-2, 1e-3)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 1e-9


def test_m2_monotone_in_t():
    ts = [0.05, 0.2, 0.5, 1.0, 2.0, 4.0]
    vals = [float(second_factorial_moment(SincCovariance(), 0.3, t).value) for t in ts]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_m2_continuous_in_level():
    model = GaussianCovariance()
    d = 1e-3
    for y in (-1.5, 0.3, 1.2):
        lo = float(second_factorial_moment(model, y, 1.0).value)
        hi = float(second_factorial_moment(model, y + d, 1.0).value)
        # |dM2/dy| stays below 0.02 for this model; a jump would break the bound
        assert abs(hi - lo) < 0.02 * d
    assert float(second_factorial_moment(model, -0.7, 1.0).value) == pytest.approx(
        float(second_factorial_moment(model, 0.7, 1.0).value), rel=1e-10)


def test_m2_divergent_model():
    res = second_factorial_moment(LogDivergentCovariance(), 0.0, 0.4)
    assert res.value.infinite and res.verdict.classification == DIVERGENT
    assert variance_crossings(LogDivergentCovariance(), 0.0, 0.4).infinite


def test_variance_small_horizon():
    en = float(expected_crossings(1, 1, 0, 1e-3))
    assert float(variance_crossings(GaussianCovariance(), 0.0, 1e-3)) == pytest.approx(en, rel=1e-3)


def test_variance_against_monte_carlo():
    model = GaussianCovariance()
    h = 1e-3
    n = int(round(1 / h)) + 1
    counts = np.array([
        count_crossings_1d(simulate_stationary_1d(model, n, h, seed=derive_seed(404, i)), 0.0, refine=True).count
        for i in range(3000)
    ], dtype=float)
    var = float(variance_crossings(model, 0.0, 1.0))
    # SE of the sample variance from the fourth central moment
    c = counts - counts.mean()
    se = math.sqrt((np.mean(c**4) - np.mean(c**2) ** 2) / counts.size)
    assert abs(counts.var(ddof=1) - var) <= 3 * se


# ----------------------------------------------------------- local time


def test_rectangle_kernel_integrates_to_area_squared():
    from scipy import integrate

    for a, b in ((1.0, 1.0), (2.0, 0.5)):
        tot = integrate.quad(lambda r: rectangle_distance_kernel(r, a, b)[0], 0, math.hypot(a, b), limit=200,
                             points=[min(a, b), max(a, b)])[0]
        assert tot == pytest.approx((a * b) ** 2, rel=1e-10)


def test_localtime_matches_oracle():
    got = localtime_second_moment(FractionalCovariance(alpha=0.4, scale=0.25), 0.0)
    assert got == pytest.approx(FROZEN["localtime_fractional_0.4_0.25_u0"], rel=1e-8)


def test_localtime_independence_limit():
    u = 0.5
    phi = math.exp(-u * u / 2) / math.sqrt(2 * math.pi)
    got = localtime_second_moment(GaussianCovariance(scale=1e-3), u)
    assert got == pytest.approx(phi**2, rel=1e-2)


def test_localtime_weights():
    model = FractionalCovariance(alpha=0.4, scale=0.25)
    assert localtime_second_moment(model, 0.0, f=0.0) == 0.0
    assert localtime_second_moment(model, 0.0, f=lambda x, y: 0 * x) == 0.0
    base = localtime_second_moment(model, 0.0)
    assert localtime_second_moment(model, 0.0, f=2.0) == pytest.approx(4 * base, rel=1e-12)
    assert localtime_second_moment(model, 0.0, f=lambda x, y: 1 + 0 * x) == pytest.approx(base, rel=5e-3)


def test_localtime_nondegeneracy_check():
    with pytest.raises(ValueError, match="density may blow up"):
        localtime_second_moment(CosineCovariance(frequency=1.0), 0.0, T=(10.0, 10.0))
