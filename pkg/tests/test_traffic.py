"""Closed forms for the traffic equation on the standard environments."""

import math

import numpy as np
import pytest

from excloud import traffic
from excloud.rates import (
    GOLDEN,
    ConstantTail,
    RateEnvironment,
    dog_and_n_sheep,
    dog_sheep,
    factorial,
    homogeneous,
    one_sheep_many_dogs,
    rate_at,
)


def test_tables_homogeneous_1_2():
    tab = traffic.compute_tables(homogeneous(1, 2), 4)
    np.testing.assert_allclose(tab.alpha, [1, 1 / 2, 1 / 4, 1 / 8, 1 / 16], rtol=1e-12)
    k = np.arange(5)
    np.testing.assert_allclose(tab.beta, 1 - 2.0**-k, rtol=1e-12, atol=0)


def test_tables_homogeneous_1_1():
    tab = traffic.compute_tables(homogeneous(1, 1), 3)
    np.testing.assert_allclose(tab.alpha, 1.0)
    np.testing.assert_allclose(tab.beta, [0, 1, 2, 3])


def test_tables_boundary():
    for env in GOLDEN.values():
        tab = traffic.compute_tables(env, 2)
        assert tab.alpha[0] == 1.0 and tab.beta[0] == 0.0


def test_tables_solve_traffic_equation():
    env = RateEnvironment(((0.3, 1.7), (2.0, 0.4), (1.1, 1.3)), ConstantTail(1.0, 1.5))
    tab = traffic.compute_tables(env, 12)
    a = np.array([rate_at(env, k)[0] for k in range(1, 14)])
    b = np.array([rate_at(env, k)[1] for k in range(1, 14)])
    for v in (0.0, 0.2):
        rho = tab.alpha + v * tab.beta
        for i in range(1, 12):
            lhs = (b[i - 1] + a[i]) * rho[i]
            rhs = a[i - 1] * rho[i - 1] + b[i] * rho[i + 1]
            assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize(
    "env, v0",
    [
        (homogeneous(1, 2), 0.0),
        (homogeneous(2, 1), -1.0),
        (dog_sheep(), 0.0),
        (one_sheep_many_dogs(), -0.5),
        (factorial(0.5), 0.0),
        (factorial(1), 0.0),
        (factorial(2), -1.0),
    ],
)
def test_v0(env, v0):
    assert traffic.compute_v0(env).v0 == pytest.approx(v0, abs=1e-12)


def test_v0_one_sheep_general():
    for a, b in ((3.0, 1.0), (1.5, 0.5), (2.0, 1.5)):
        v0 = traffic.compute_v0(one_sheep_many_dogs(a, b)).v0
        assert v0 == pytest.approx(-(a - b) / (1 + a - b), rel=1e-10)


def test_v0_series_prefix_converges():
    # v0 = -1/S_inf with S_inf the full series; a prefix does not change the tail class
    env = RateEnvironment(((1.0, 3.0), (0.5, 2.0)), ConstantTail(3.0, 1.0))
    r = traffic.compute_v0(env)
    assert r.v0 < 0
    assert r.bracket[0] <= r.v0 <= r.bracket[1]


def test_admissible_homogeneous():
    V = traffic.admissible_set(homogeneous(1, 2))
    assert V.as_dict() == {"left": 0.0, "right": 1.0, "right_end": "open",
                           "right_open": True, "exactness": "exact"}


def test_admissible_dog_sheep_singleton():
    V = traffic.admissible_set(dog_sheep())
    assert V.v0 == 0.0 and V.v1 == 0.0 and V.right_end == "singleton"


def test_admissible_empty():
    assert traffic.admissible_set(homogeneous(2, 1)).empty
    assert traffic.admissible_set(homogeneous(1, 1)).empty


@pytest.mark.parametrize("a, lo, hi", [(0.5, 0.0, 1.5), (1.0, 0.0, 1.0), (2.0, -1.0, 0.0),
                                       (1.5, -0.5, 0.5)])
def test_admissible_factorial(a, lo, hi):
    V = traffic.admissible_set(factorial(a))
    assert V.v0 == pytest.approx(lo, abs=1e-12)
    assert V.v1 == pytest.approx(hi, rel=1e-10)
    assert V.right_end == "open"


def test_rho_dog_sheep():
    s = traffic.solve_rho(dog_sheep(), 0.0, 50)
    np.testing.assert_allclose(s.rho, 0.5, rtol=1e-12)
    assert s.admissible


def test_rho_one_sheep():
    s = traffic.solve_rho(one_sheep_many_dogs(), -0.5, 40)
    np.testing.assert_allclose(s.rho, 0.5, rtol=1e-10)


def test_rho_factorial_1():
    s = traffic.solve_rho(factorial(1), 0.5, 12)
    k = np.arange(1, 13)
    expect = np.array([(1 + kk / 2) / math.factorial(kk + 1) for kk in k])
    np.testing.assert_allclose(s.rho, expect, rtol=1e-10)
    assert s.summable == "yes"


def test_rho_homogeneous_geometric():
    s = traffic.solve_rho(homogeneous(1, 2), 0.0, 30)
    np.testing.assert_allclose(s.rho, 2.0 ** -np.arange(1, 31), rtol=1e-12)
    s = traffic.solve_rho(homogeneous(1, 2), 0.5, 60)
    assert s.tail_limit == pytest.approx(0.5)


def test_rho_outside_v_not_admissible():
    assert not traffic.solve_rho(homogeneous(1, 2), 1.0, 20).admissible
    assert not traffic.solve_rho(dog_sheep(), 0.1, 50).admissible


@pytest.mark.parametrize(
    "env, kind",
    [
        (homogeneous(1, 2), "VF_singleton_zero"),
        (dog_sheep(), "VF_empty"),
        (factorial(1), "VF_equals_V"),
        (factorial(0.5), "VF_equals_V"),
        (one_sheep_many_dogs(), "VF_empty"),
    ],
)
def test_classify_vf(env, kind):
    assert traffic.classify_vf(env).kind == kind


def test_vf_singleton_zero_value():
    assert traffic.classify_vf(homogeneous(1, 2)).v == 0.0


def test_finite_speed_dog_and_sheep():
    f = traffic.finite_speed(dog_and_n_sheep(3, 0.5), 3)
    assert f.vN == pytest.approx(0.125, rel=1e-12)
    f = traffic.finite_speed(dog_and_n_sheep(2, 0.5), 2)
    np.testing.assert_allclose(f.rhoN, [2 / 3, 5 / 6], rtol=1e-12)


@pytest.mark.parametrize("N", [1, 2, 5, 9])
def test_finite_speed_formula(N):
    a = 0.3
    f = traffic.finite_speed(dog_and_n_sheep(N, a), N)
    k = np.arange(1, N + 1)
    np.testing.assert_allclose(f.rhoN, a + (1 - a) * k / (N + 1), rtol=1e-12)
    assert f.vN == pytest.approx((1 - a) / (N + 1), rel=1e-12)


def test_finite_lower_speed_increases_to_v0():
    env = homogeneous(1, 2)
    vs = [traffic.finite_speed(env, N).vN0 for N in range(1, 40)]
    assert all(x <= y for x, y in zip(vs, vs[1:]))
    assert vs[-1] <= 0.0
    assert vs[-1] == pytest.approx(0.0, abs=1e-10)
