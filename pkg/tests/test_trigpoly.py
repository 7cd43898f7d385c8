import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kacrice.rng import derive_seed
from kacrice.trigpoly import (
    TrigPoly,
    count_roots_detail,
    count_roots_trig,
    expected_roots_trig,
    sample_trig_poly,
    scaled_trig_covariance,
    sinc_limit_variance,
    trig_covariance,
)
from kacrice.trigpoly import _sinc_conditional_term

from oracles import FROZEN


def within_3se(samples, target):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    if se == 0:
        return samples.mean() == target
    return abs(samples.mean() - target) <= 3 * se


# --------------------------------------------------------------- sampling


def test_sampling_determinism():
    a, b = sample_trig_poly(7, 123), sample_trig_poly(7, 123)
    assert a.a.tobytes() == b.a.tobytes() and a.b.tobytes() == b.b.tobytes()
    assert not np.array_equal(a.a, sample_trig_poly(7, 124).a)


def test_coefficient_variance_and_covariance():
    N, s = 4, 0.7
    polys = [sample_trig_poly(N, derive_seed(1, i, "trig")) for i in range(10_000)]
    assert within_3se([p.a[2] ** 2 for p in polys], 1.0)
    assert within_3se([p.b[0] ** 2 for p in polys], 1.0)
    x0 = np.array([float(p(0.0)) for p in polys])
    xs = np.array([float(p(s)) for p in polys])
    assert within_3se(x0**2, 1.0)
    assert within_3se(x0 * xs, float(trig_covariance(N, s)))


def test_evaluation_paths_agree():
    p = sample_trig_poly(9, 5)
    M = 64
    vals, der = p.on_grid(M)
    t = 2 * np.pi * np.arange(M) / M
    assert np.allclose(vals, p(t), atol=1e-12)
    assert np.allclose(der, p(t, 1), atol=1e-11)
    h = 1e-6
    assert np.allclose(p(t, 1), (p(t + h) - p(t - h)) / (2 * h), atol=1e-7)
    with pytest.raises(ValueError):
        p.on_grid(18)


# --------------------------------------------------------------- counting


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_degree_one_has_two_roots(seed):
    assert count_roots_trig(sample_trig_poly(1, seed), 0.0) == 2


def test_sin_2t_has_four_roots():
    p = TrigPoly(np.array([0.0, 1.0]), np.zeros(2), scale=1.0)
    assert count_roots_trig(p, 0.0) == 4
    assert count_roots_trig(p, 0.0, method="grid") == 4
    assert count_roots_trig(p, 0.0, method="companion") == 4


def test_level_above_maximum():
    p = sample_trig_poly(12, 3)
    assert count_roots_trig(p, p.sup_bound() * 1.01) == 0
    assert count_roots_trig(p, float(np.max(np.abs(p(np.linspace(0, 2 * np.pi, 20000))))) + 0.1) == 0


def test_counting_errors():
    p = sample_trig_poly(3, 1)
    with pytest.raises(ValueError):
        count_roots_trig(p, math.inf)
    with pytest.raises(ValueError):
        count_roots_trig(p, 0.0, method="newton")


def test_companion_and_grid_agree_on_1000_polynomials():
    rng = np.random.default_rng(2024)
    for i in range(1000):
        N = int(rng.integers(1, 31))
        p = sample_trig_poly(N, derive_seed(77, i, "trig"))
        level = float(rng.choice([0.0, 0.5, 1.0]))
        detail = count_roots_detail(p, level, check=True)
        if detail.method == "bound":
            continue
        if detail.companion_count is not None:
            assert detail.companion_count == detail.grid_count, (i, N, level)
        assert count_roots_trig(p, level, method="grid") == detail.count


def test_high_degree_uses_grid():
    p = sample_trig_poly(200, 11)
    d = count_roots_detail(p, 0.0)
    assert d.method == "grid"
    assert d.count % 2 == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.floats(0, 2 * math.pi), st.floats(-1.5, 1.5))
def test_rotation_invariance(seed, N, c, level):
    p = sample_trig_poly(N, seed)
    assert count_roots_trig(p, level) == count_roots_trig(p.shifted(c), level)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.floats(-1.5, 1.5))
def test_root_count_is_even(seed, N, level):
    assert count_roots_trig(sample_trig_poly(N, seed), level) % 2 == 0


# ----------------------------------------------------------- expectation


def test_expected_roots_examples():
    assert expected_roots_trig(1, 0.0) == pytest.approx(2.0, abs=1e-14)
    assert expected_roots_trig(100, 0.0) == pytest.approx(2 / math.sqrt(3) * math.sqrt(101 * 201 / 2), rel=1e-14)
    assert expected_roots_trig(10**6, 0.0) / 10**6 == pytest.approx(2 / math.sqrt(3), rel=1e-5)
    assert expected_roots_trig(10**6, 1.0) / 10**6 == pytest.approx(2 / math.sqrt(3) * math.exp(-0.5), rel=1e-5)


@pytest.mark.parametrize("N", [1, 5, 25, 100])
@pytest.mark.parametrize("y", [0.0, 1.0])
def test_mean_root_count(N, y):
    counts = [count_roots_trig(sample_trig_poly(N, derive_seed(500 + N, i, "trig")), y) for i in range(1000)]
    assert within_3se(counts, expected_roots_trig(N, y))


# -------------------------------------------------------- limiting variance


def test_scaled_covariance_converges_to_sinc():
    t = np.linspace(-10, 10, 2001)
    t = t[t != 0]
    err = [float(np.max(np.abs(scaled_trig_covariance(N, t) - np.sin(t) / t))) for N in (10, 100, 1000)]
    assert err[0] > err[1] > err[2]
    assert err[2] < 2e-3


def test_sinc_constant_matches_oracle():
    res = sinc_limit_variance()
    assert res.value == pytest.approx(FROZEN["sinc_limit_constant"], abs=1e-9)
    assert res.centering == pytest.approx(2 / (3 * math.pi), rel=1e-14)
    assert res.decay_at_cutoff < 1e-6
    assert res.tail_bound < 1e-3


def test_other_centering_does_not_decay():
    res = sinc_limit_variance()
    other = res.candidates["lambda2/pi"]
    assert other["centering"] == pytest.approx(1 / (3 * math.pi))
    assert other["decay_at_cutoff"] > 0.1


def test_centered_integrand_decays():
    tau = np.array([1e3, 3e3, 9e3])
    g = _sinc_conditional_term(tau) - 2 / (3 * math.pi)
    assert np.all(np.abs(g) < 1e-5)
    assert np.abs(g[-1]) < np.abs(g[0]) or np.abs(g[0]) < 1e-9


def test_integrand_finite_at_origin():
    tau = np.geomspace(1e-6, 1e-2, 9)
    g = _sinc_conditional_term(tau)
    assert np.all(np.isfinite(g))
    # g vanishes linearly at the origin
    assert np.allclose(g / tau, g[0] / tau[0], rtol=1e-3)


def test_strict_decay_tolerance_raises():
    with pytest.raises(ArithmeticError, match="centering constant inconsistent"):
        sinc_limit_variance(tau_max=50.0, decay_tol=1e-12)
