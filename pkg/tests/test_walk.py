import numpy as np
import pytest

from excloud import traffic, walk
from excloud.rates import (
    GOLDEN,
    ConstantTail,
    RateEnvironment,
    dog_sheep,
    factorial,
    homogeneous,
    one_sheep_many_dogs,
    rate_at,
)


@pytest.mark.parametrize(
    "env, kind, p0",
    [
        (homogeneous(1, 2), "positive_recurrent", 0.0),
        (dog_sheep(), "null_recurrent", 0.0),
        (one_sheep_many_dogs(), "transient", 0.5),
        (homogeneous(2, 1), "transient", 0.5),
        (factorial(0.5), "positive_recurrent", 0.0),
        (factorial(1), "null_recurrent", 0.0),
        (factorial(2), "transient", 0.5),
    ],
)
def test_classify(env, kind, p0):
    wc = walk.classify(env)
    assert wc.kind == kind
    assert wc.p0 == pytest.approx(p0, abs=1e-12)


def test_p0_matches_v0_on_golden():
    for name, env in GOLDEN.items():
        wc = walk.classify(env)
        v0 = traffic.compute_v0(env).v0
        assert abs(abs(v0) - rate_at(env, 1)[0] * wc.p0) <= 1e-12, name


def test_transition_probabilities():
    left, right = walk.transition_probabilities(dog_sheep(), 4)
    # from queue i: left b_i / (b_i + a_{i+1}), right a_{i+1} / (b_i + a_{i+1})
    np.testing.assert_allclose(left[1:] + right[1:], 1.0)
    assert left[1] == pytest.approx(0.5)
    assert right[1] == pytest.approx(0.5)


def test_walk_starts_and_absorbs():
    path = walk.simulate_walk(homogeneous(1, 2), 10_000, start=1, seed=1)
    assert path[0] == 1
    assert path[-1] == 0
    assert np.all(np.abs(np.diff(path)) == 1)
    assert np.count_nonzero(path == 0) == 1


def test_walk_absorbed_on_first_left_step():
    # a strongly left-biased walk almost surely steps left first from some seed
    env = RateEnvironment(((1.0, 1e6),), ConstantTail(1.0, 1e6))
    path = walk.simulate_walk(env, 100, start=1, seed=0)
    assert path.tolist() == [1, 0]


def test_walk_is_reproducible():
    env = dog_sheep()
    a = walk.simulate_walk(env, 500, seed=42)
    b = walk.simulate_walk(env, 500, seed=42)
    np.testing.assert_array_equal(a, b)


def test_escape_fraction_one_sheep():
    f = walk.escape_fraction(one_sheep_many_dogs(), 100_000, 2_000, seed=3)
    assert f == pytest.approx(0.5, abs=0.01)


def test_homogeneous_walk_absorbed():
    f = walk.escape_fraction(homogeneous(1, 2), 10_000, 10_000, seed=4)
    assert 1.0 - f >= 0.99


def test_escape_probability_bracket():
    p0, exactness, (lo, hi) = walk.escape_probability(
        RateEnvironment(((1.0, 2.0), (3.0, 0.5)), ConstantTail(2.0, 1.0)))
    assert lo <= p0 <= hi
    assert 0 < p0 < 1
