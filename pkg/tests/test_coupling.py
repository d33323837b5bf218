import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from excloud.coupling import (
    CapReached,
    PoissonField,
    apply_field,
    build_field,
    sandwich_run,
    two_class_run,
)
from excloud.engine import GapState
from excloud.rates import GOLDEN, dog_sheep, homogeneous

LEFT, RIGHT = 0, 1


def _field(arrows, cap=8, window=10.0):
    t = np.array([a[0] for a in arrows], float)
    q = np.array([a[1] for a in arrows], np.int64)
    k = np.array([a[2] for a in arrows], np.int64)
    z = np.ones(cap + 1)
    return PoissonField(window, cap, t, q, k, z, z)


def test_empty_window():
    f = build_field(dog_sheep(), 0.0, 16, 1)
    assert f.n_arrows == 0
    assert f.counts(LEFT).sum() == 0 and f.counts(RIGHT).sum() == 0


def test_poisson_counts():
    f = build_field(dog_sheep(), 1000.0, 64, 2)
    left = f.counts(LEFT)[1:]
    # every b_k equals 1 for dog-sheep, so each queue gets Poisson(1000) left arrows
    assert np.all(np.abs(left - 1000) <= 4 * math.sqrt(1000))
    assert np.all(np.diff(f.times) > 0)
    assert f.counts(LEFT)[0] == 0


def test_field_reproducible():
    a = build_field(dog_sheep(), 50.0, 16, 7)
    b = build_field(dog_sheep(), 50.0, 16, 7)
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.queue, b.queue)


def test_single_injection():
    tr = apply_field(GapState(), _field([(1.0, 0, RIGHT)]))
    assert tr.final.gaps == {1: 1} and tr.final.x1 == -1


def test_arrow_on_empty_queue_is_noop():
    tr = apply_field(GapState(), _field([(1.0, 3, LEFT), (2.0, 2, RIGHT)]))
    assert tr.final.gaps == {} and tr.final.x1 == 0


def test_departure_moves_x1_right():
    tr = apply_field(GapState.from_gaps({1: 2}), _field([(1.0, 1, LEFT)]))
    assert tr.final.gaps == {1: 1} and tr.final.x1 == 1


def test_lower_truncation_removes():
    N = 3
    init = GapState.from_gaps({3: 2})
    tr = apply_field(init, _field([(1.0, 3, RIGHT), (2.0, 3, RIGHT)]), "lower", N)
    assert tr.final.gaps == {}
    assert np.all(np.diff(np.r_[2, tr.total]) <= 0)


def test_upper_truncation_injects():
    tr = apply_field(GapState(), _field([(1.0, 4, LEFT)]), "upper", 3)
    assert tr.final.gaps == {3: 1}


def test_cap_reached():
    with pytest.raises(CapReached):
        apply_field(GapState.from_gaps({8: 1}), _field([(1.0, 8, RIGHT)], cap=8))


def test_trajectory_replay():
    f = build_field(dog_sheep(), 20.0, 32, 3)
    init = GapState.from_gaps({2: 1})
    tr = apply_field(init, f)
    mid = tr.state_after(len(f.times) // 2)
    assert mid.total_customers == tr.total[len(f.times) // 2]


def test_sandwich_large_n_identical():
    r = sandwich_run(dog_sheep(), GapState(), 60, 5.0, 4, cap=64)
    assert r.identical and r.n_violations == 0
    assert r.final_upper[60] > 0  # boundary injections happened but stayed far away


@pytest.mark.parametrize("name", ["homogeneous_1_2", "dog_sheep"])
@pytest.mark.parametrize("N", [4, 16])
def test_sandwich_ordering(name, N):
    r = sandwich_run(GOLDEN[name], GapState(), N, 60.0, 11, cap=128)
    assert r.n_violations == 0
    assert np.all(r.x1_lower <= r.x1_semi) and np.all(r.x1_semi <= r.x1_upper)
    assert np.all(r.final_lower[: N + 1] <= r.final_semi[: N + 1])
    assert np.all(r.final_semi[: N + 1] <= r.final_upper[: N + 1])


def test_two_class_identical():
    init = GapState.from_gaps({1: 2, 3: 1})
    r = two_class_run(dog_sheep(), init, init, 50.0, 5, cap=64)
    assert r.n_violations == 0
    assert r.second.sum() == 0
    np.testing.assert_array_equal(r.lower_final, r.upper_final)


def test_two_class_heaviside_vs_three():
    r = two_class_run(dog_sheep(), GapState(), GapState.from_gaps({1: 3}), 350.0, 6, cap=256)
    assert r.n_arrows >= 100_000
    assert r.n_violations == 0
    assert np.all(r.lower_final <= r.upper_final)


def test_two_class_requires_domination():
    with pytest.raises(ValueError):
        two_class_run(dog_sheep(), GapState.from_gaps({1: 1}), GapState(), 1.0, 0, cap=8)


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.integers(0, 3), min_size=6, max_size=6),
    st.lists(st.integers(0, 3), min_size=6, max_size=6),
    st.integers(0, 2**32),
)
def test_two_class_random_pairs(lo, extra, seed):
    low = GapState.from_gaps({k + 1: c for k, c in enumerate(lo) if c})
    up = GapState.from_gaps({k + 1: c + e for k, (c, e) in enumerate(zip(lo, extra)) if c + e})
    r = two_class_run(homogeneous(1, 2), low, up, 20.0, seed, cap=64)
    assert r.n_violations == 0


def test_two_class_projection_matches_single_runs():
    env = dog_sheep()
    low = GapState.from_gaps({2: 1})
    up = GapState.from_gaps({1: 1, 2: 2, 5: 1})
    f = build_field(env, 40.0, 64, 9)
    r = two_class_run(env, low, up, 40.0, None, fld=f)
    a = apply_field(low, f)
    b = apply_field(up, f)
    m = len(r.first) - 1
    np.testing.assert_array_equal(r.first[1:], a.final.window(m))
    np.testing.assert_array_equal((r.first + r.second)[1:], b.final.window(m))
    assert r.n_violations == 0
