import numpy as np
import pytest

from excloud.rng import MAX_SEED, make_rng, replicate_seeds


def test_same_seed_same_stream():
    assert make_rng(7).random(5).tolist() == make_rng(7).random(5).tolist()


def test_keys_split_streams():
    a = make_rng(7, 0).random(5)
    b = make_rng(7, 1).random(5)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(7).random(5))


def test_generator_passthrough():
    g = np.random.default_rng(1)
    assert make_rng(g) is g


def test_seed_range():
    make_rng(MAX_SEED)
    with pytest.raises(ValueError):
        make_rng(-1)
    with pytest.raises(ValueError):
        make_rng(MAX_SEED + 1)


def test_replicate_seeds():
    seeds = replicate_seeds(3, 4)
    assert seeds == [(3, (i,)) for i in range(4)]
