"""Acceptance criteria 1-13, each at its stated tolerance.

Tests are named test_criterion_NN_*; conftest.py prints one PASS/FAIL line
per criterion at the end of the run.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from kacrice.counting import count_joint_zeros_2d, level_curve_length_2d, occupation_local_time, smoothed_length_estimator
from kacrice.experiments import replicate_values, run_experiment, validate_config
from kacrice.gaussian_core import (
    FractionalCovariance,
    GaussianCovariance,
    LogDivergentCovariance,
    SincCovariance,
    abs_hermite_coeffs,
    gauss_hermite_1d,
    gauss_quadrature_2d,
    hermite_eval,
    mehler_cross_moment,
)
from kacrice.kss import scaled_limits, scaled_values
from kacrice.rice import DIVERGENT, FINITE, expected_crossings, geman_condition, localtime_second_moment, second_factorial_moment
from kacrice.rng import derive_seed
from kacrice.sampler import RandomWaveSpec, SmoothingKernel, kernel_mu_epsilon, simulate_isotropic_2d
from kacrice.trigpoly import expected_roots_trig, sinc_limit_variance


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ----------------------------------------------------- 1 and 5: rice1d


@pytest.fixture(scope="module")
def rice_counts():
    cfg = validate_config({"experiment": "rice1d", "seed": 1, "replicates": 5000,
                           "params": {"model": "gaussian", "y": 0.0, "t": 1.0, "h": 5e-4}})
    (_, counts), elapsed = timed(lambda: replicate_values(cfg))
    return counts, elapsed


def test_criterion_01_rice_first_moment(rice_counts):
    counts, elapsed = rice_counts
    first = counts[:2000]
    m, se = mean_se(first)
    z = (m - 1 / math.pi) / se
    print(f"mean {m:.5f} se {se:.5f} target {1 / math.pi:.5f} z {z:+.2f}")
    assert float(expected_crossings(1, 1, 0, 1)) == pytest.approx(1 / math.pi, abs=1e-15)
    assert abs(z) <= 3
    assert elapsed * 2000 / 5000 <= 120


def test_criterion_05_second_factorial_moment(rice_counts):
    counts, elapsed = rice_counts
    res, t_quad = timed(lambda: second_factorial_moment(GaussianCovariance(), 0.0, 1.0))
    m2 = float(res.value)
    m, se = mean_se(counts * (counts - 1))
    z = (m - m2) / se
    print(f"MC {m:.5f} se {se:.5f} quadrature {m2:.6f} z {z:+.2f}")
    assert abs(z) <= 3
    assert elapsed + t_quad <= 300


# ----------------------------------------------------------- 2, 3, 4: trig


def test_criterion_02_trig_degree_one_exact():
    rep = run_experiment(validate_config({"experiment": "trig", "seed": 2, "replicates": 1000,
                                          "params": {"N": 1, "y": 0.0}}), write=False)
    _, values = replicate_values(validate_config({"experiment": "trig", "seed": 2, "replicates": 1000}))
    assert np.all(values == 2.0)
    assert rep.mc_mean == 2.0 and rep.mc_se == 0.0 and rep.z_score == 0.0


def test_criterion_03_trig_mean_at_N100():
    cfg = validate_config({"experiment": "trig", "seed": 3, "replicates": 2000, "params": {"N": 100, "y": 0.0}})
    rep, elapsed = timed(lambda: run_experiment(cfg, write=False))
    exact = expected_roots_trig(100, 0.0)
    assert exact == pytest.approx(2 / math.sqrt(3) * math.sqrt(101 * 201 / 2), rel=1e-14)
    print(f"mean/N {rep.mc_mean / 100:.5f} exact/N {exact / 100:.5f} z {rep.z_score:+.2f}")
    assert abs(rep.mc_mean - exact) <= 3 * rep.mc_se
    assert abs(rep.mc_mean / exact - 1) <= 0.02
    assert elapsed <= 300


def test_criterion_04_trig_limiting_variance():
    cfg = validate_config({"experiment": "trig", "seed": 4, "replicates": 2000,
                           "params": {"N": 200, "y": 0.0, "statistic": "variance"}})
    rep, elapsed = timed(lambda: run_experiment(cfg, write=False))
    lim = sinc_limit_variance()
    assert lim.centering == pytest.approx(2 / (3 * math.pi), rel=1e-14)
    print(f"Var/N {rep.mc_mean:.4f} se {rep.mc_se:.4f} limit {lim.value:.6f}")
    assert abs(rep.mc_mean / lim.value - 1) <= 0.10
    assert elapsed <= 600


# ------------------------------------------------------------------ 6: Geman


@pytest.mark.parametrize("model,want", [
    (GaussianCovariance(), FINITE),
    (SincCovariance(), FINITE),
    (LogDivergentCovariance(), DIVERGENT),
], ids=["gaussian", "sinc", "log-divergent"])
def test_criterion_06_geman_routes(model, want):
    v = geman_condition(model)
    assert v.route_verdicts == (want, want)
    assert v.classification == want


# ------------------------------------------------------ 7: Hermite / Mehler


def test_criterion_07_orthogonality():
    worst = 0.0
    for k in range(11):
        for l in range(11):
            got = gauss_hermite_1d(lambda x: hermite_eval(k, x) * hermite_eval(l, x))
            want = math.factorial(k) if k == l else 0.0
            worst = max(worst, abs(got - want))
    print(f"max orthogonality error {worst:.2e}")
    assert worst <= 1e-8


def test_criterion_07_mehler_consistency():
    rng = np.random.default_rng(7)
    worst = 0.0
    for omega in rng.uniform(-0.999, 0.999, 25):
        for k in range(7):
            got = gauss_quadrature_2d(lambda z, w: hermite_eval(k, z) * hermite_eval(k, w), omega, nodes=60)
            want = omega**k * math.factorial(k)
            assert mehler_cross_moment(k, k, omega) == pytest.approx(want, rel=1e-12, abs=1e-15)
            worst = max(worst, abs(got - want))
    print(f"max Mehler error {worst:.2e}")
    assert worst <= 1e-6


def _reconstruction_error(m, K=40):
    s = abs_hermite_coeffs(m, K)

    def f(x):
        return (abs(x - m) - s.evaluate(x)) ** 2 * math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)

    return sum(integrate.quad(f, a, b, limit=400, epsabs=1e-14)[0] for a, b in ((-40, m), (m, 40)))


@pytest.mark.parametrize("m", np.linspace(-2, 2, 9))
def test_criterion_07_reconstruction(m):
    err = _reconstruction_error(m)
    print(f"m={m:+.2f} squared L2 error {err:.3e}")
    assert err < 1e-4


@pytest.mark.parametrize("m", np.linspace(-2, 2, 9))
def test_criterion_07_parseval(m):
    s = abs_hermite_coeffs(m, 40)
    partial = s.weighted_norm2()
    assert partial <= 1 + m * m
    assert abs(1 + m * m - partial) <= s.tail_mass * (1 + 1e-6) + 1e-12


# -------------------------------------------------------------- 8, 9: KSS


@pytest.mark.parametrize("n,target", [(1, 2.0), (4, 4.0), (9, 6.0)])
def test_criterion_08_kss_counts(n, target):
    cfg = validate_config({"experiment": "kss-count", "seed": 8, "replicates": 4000, "params": {"n": n}})
    rep = run_experiment(cfg, write=False)
    assert rep.analytic_value == pytest.approx(target, rel=1e-14)
    if n == 1:
        _, values = replicate_values(cfg)
        assert np.all(values == 2.0)
    else:
        print(f"n={n} mean {rep.mc_mean:.4f} se {rep.mc_se:.4f}")
        assert abs(rep.mc_mean - target) <= 3 * rep.mc_se


def test_criterion_09_kss_great_circle():
    cfg = validate_config({"experiment": "kss-volume", "seed": 9, "replicates": 20, "params": {"n": 1, "mesh_level": 6}})
    _, values = replicate_values(cfg)
    assert np.all(np.abs(values / (2 * math.pi) - 1) <= 0.005)


def test_criterion_09_kss_degree_two_length():
    cfg = validate_config({"experiment": "kss-volume", "seed": 9, "replicates": 500, "params": {"n": 2, "mesh_level": 6}})
    rep, elapsed = timed(lambda: run_experiment(cfg, write=False))
    target = 2 * math.pi * math.sqrt(2)
    assert rep.analytic_value == pytest.approx(target, rel=1e-12)
    print(f"mean {rep.mc_mean:.4f} se {rep.mc_se:.4f} target {target:.4f}")
    assert abs(rep.mc_mean - target) <= 3 * rep.mc_se + 0.01 * target
    assert elapsed <= 600


# --------------------------------------------------- 10, 11: random waves


@pytest.fixture(scope="module")
def wave_stats():
    spec = RandomWaveSpec(k0=math.sqrt(2.0))
    assert spec.lambda2 == pytest.approx(1.0)
    ppw = 32
    h = 2 * math.pi / spec.k0 / ppw
    n = 20 * ppw + 1
    area = ((n - 1) * h) ** 2
    t0 = time.perf_counter()
    dis, length = [], []
    for i in range(200):
        xi = simulate_isotropic_2d(spec, (n, n), h, derive_seed(10, 2 * i, "waves"))
        eta = simulate_isotropic_2d(spec, (n, n), h, derive_seed(10, 2 * i + 1, "waves"))
        dis.append(count_joint_zeros_2d(xi, eta) / area)
        length.append(0.5 * (level_curve_length_2d(xi, 0.0).length + level_curve_length_2d(eta, 0.0).length) / area)
    return np.array(dis), np.array(length), time.perf_counter() - t0


def test_criterion_10_dislocation_density(wave_stats):
    dis, _, elapsed = wave_stats
    m, se = mean_se(dis)
    print(f"density {m:.5f} se {se:.5f} target {1 / (2 * math.pi):.5f}")
    assert abs(m - 1 / (2 * math.pi)) <= 3 * se
    assert elapsed <= 600


def test_criterion_11_nodal_length_density(wave_stats):
    _, length, elapsed = wave_stats
    m, se = mean_se(length)
    print(f"length/area {m:.5f} se {se:.5f} target 0.5")
    assert abs(m - 0.5) <= 3 * se
    assert elapsed <= 600


# ------------------------------------------------------------ 12: local time


LT_MODEL = FractionalCovariance(alpha=0.4, scale=0.25)
LT_H = 1.0 / 256
LT_EPS = (0.2, 0.1, 0.05)
UNIT = (0.0, 1.0, 0.0, 1.0)


@pytest.fixture(scope="module")
def localtime_stats():
    # pad the unit square by the widest kernel radius so that smoothing in
    # 'valid' mode still covers [0, 1)^2; cell centres sit at (k + 1/2) h
    pad = int(math.ceil(max(LT_EPS) / LT_H))
    n = int(round(1 / LT_H)) + 2 * pad
    origin = (LT_H / 2 - pad * LT_H,) * 2
    kernel = SmoothingKernel()
    mus = {e: kernel_mu_epsilon(LT_MODEL, kernel, e) for e in LT_EPS}
    t0 = time.perf_counter()
    eta2, dist = [], {e: [] for e in LT_EPS}
    for i in range(200):
        s = simulate_isotropic_2d(LT_MODEL, (n, n), LT_H, derive_seed(12, i, "localtime"), origin=origin)
        eta2.append(occupation_local_time(s, 0.0, 0.02, region=UNIT).value ** 2)
        eta = occupation_local_time(s, 0.0, 0.05, region=UNIT).value
        for e in LT_EPS:
            xi = smoothed_length_estimator(s, kernel, e, 0.0, mu_eps=mus[e], region=UNIT)
            dist[e].append((xi - eta) ** 2)
    return np.array(eta2), {e: np.array(v) for e, v in dist.items()}, time.perf_counter() - t0


def test_criterion_12a_occupation_identity():
    n = int(round(1 / LT_H))
    for i in range(5):
        s = simulate_isotropic_2d(LT_MODEL, (n, n), LT_H, derive_seed(121, i, "localtime"), origin=(LT_H / 2,) * 2)
        for delta in (0.02, 0.05, 0.1):
            lo = math.floor(s.values.min() / (2 * delta)) * 2 * delta
            levels = lo + delta + 2 * delta * np.arange(int(np.ceil((s.values.max() - lo) / (2 * delta))) + 1)
            total = math.fsum(occupation_local_time(s, u, delta, region=UNIT).value for u in levels) * 2 * delta
            assert total == pytest.approx(1.0, rel=1e-12)


def test_criterion_12b_second_moment(localtime_stats):
    eta2, _, _ = localtime_stats
    want = localtime_second_moment(LT_MODEL, 0.0, (1.0, 1.0))
    m, se = mean_se(eta2)
    print(f"E[eta^2] {m:.5f} se {se:.5f} analytic {want:.5f}")
    assert abs(m - want) <= 3 * se


def test_criterion_12c_l2_distance_decreases(localtime_stats):
    _, dist, elapsed = localtime_stats
    d = [math.sqrt(dist[e].mean()) for e in LT_EPS]
    print("pooled L2 distance " + ", ".join(f"eps={e}: {v:.4f}" for e, v in zip(LT_EPS, d)))
    assert d[0] > d[1] > d[2]
    assert elapsed <= 900


# -------------------------------------------------------- 13: KSS limits


@pytest.mark.parametrize("z", [0.5, 1.0, 2.0])
def test_criterion_13_kss_scaled_limits(z):
    lim = scaled_limits(z)
    val = scaled_values(10_000, z)
    # 5% of the limit, or of the Gaussian envelope exp(-z^2/2) where the limit is 0
    env = math.exp(-z * z / 2)
    for key in lim:
        assert abs(val[key] - lim[key]) <= 0.05 * max(abs(lim[key]), env), key
