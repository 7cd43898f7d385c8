"""Recompute every frozen reference value from its oracle."""

import math

import pytest

import oracles
from oracles import FROZEN


def test_hermite_routes_agree():
    assert float(oracles.he(6, 1.3)) == pytest.approx(FROZEN["hermite_6_at_1.3"], abs=1e-6)
    for k in range(8):
        assert float(oracles.hermite_by_derivative(k, 0.7)) == pytest.approx(float(oracles.he(k, 0.7)), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("key", list(FROZEN["abs_coeff"]))
def test_abs_coeff_oracle(key):
    k, m = key
    assert float(oracles.abs_coeff(k, m)) == pytest.approx(FROZEN["abs_coeff"][key], rel=1e-10, abs=1e-15)


@pytest.mark.parametrize("key", list(FROZEN["abs_product"]))
def test_abs_product_oracle(key):
    assert float(oracles.abs_product(*key)) == pytest.approx(FROZEN["abs_product"][key], rel=1e-10)


def test_abs_product_oracle_matches_arcsine_form():
    for rho in (-0.9, 0.0, 0.5, 0.99):
        assert float(oracles.abs_product(0.0, rho)) == pytest.approx(oracles.abs_product_arcsine(rho), rel=1e-12)


@pytest.mark.parametrize("y,key", [(0.0, "m2_gaussian_y0_t1"), (1.0, "m2_gaussian_y1_t1")])
def test_m2_oracle(y, key):
    assert float(oracles.second_factorial_moment_gaussian(y, 1.0)) == pytest.approx(FROZEN[key], rel=1e-8)


def test_sinc_constant_oracle():
    assert float(oracles.sinc_limit_constant()) == pytest.approx(FROZEN["sinc_limit_constant"], abs=1e-9)
    assert FROZEN["sinc_limit_constant"] == pytest.approx(0.558217240510, abs=1e-11)


def test_localtime_oracle():
    got = oracles.localtime_second_moment_fractional(0.4, 0.25, 0.0)
    assert float(got) == pytest.approx(FROZEN["localtime_fractional_0.4_0.25_u0"], rel=1e-8)
    assert math.isfinite(got)
