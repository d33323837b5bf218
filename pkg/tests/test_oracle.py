import json
from math import comb

import numpy as np
import pytest

from excloud import oracle
from excloud.oracle import CapError, TruncatedChain
from excloud.rates import GOLDEN, HypothesisError, NoTail, RateEnvironment, dog_and_n_sheep

from .conftest import GOLDEN_DIR


def _tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@pytest.mark.parametrize("N, C", [(1, 5), (2, 3), (3, 8), (4, 12)])
def test_enumeration_size(N, C):
    s = oracle.enumerate_states(N, C)
    assert len(s) == comb(N + C, N)
    assert s.sum(axis=1).max() == C
    assert len({tuple(r) for r in s}) == len(s)


def test_index_roundtrip():
    ch = TruncatedChain.from_env(GOLDEN["dog_sheep"], 3, 6, "lower")
    for i, row in enumerate(ch.states):
        assert ch.index(row) == i


def test_generator_rows_sum_to_zero():
    ch = TruncatedChain.from_env(dog_and_n_sheep(3), 3, 7, "finite")
    np.testing.assert_allclose(np.asarray(ch.Q.sum(axis=1)).ravel(), 0.0, atol=1e-12)


def test_mm1():
    env = RateEnvironment(((1.0, 2.0), (0.0, 1.0)), NoTail())
    ch = TruncatedChain.from_env(env, 1, 60, "lower")
    r = oracle.stationary(ch)
    np.testing.assert_allclose(r.p, 0.5 ** np.arange(61) * 0.5, atol=1e-12)


def test_dog_and_two_sheep_c40_truncated():
    ch = TruncatedChain.from_env(dog_and_n_sheep(2, 0.5), 2, 40, "finite")
    with pytest.raises(CapError):
        oracle.stationary(ch)
    r = oracle.stationary(ch, max_boundary_mass=1.0)
    # blocking at the cap keeps the product form exact after renormalizing
    assert _tv(r.p, oracle.product_form(ch, truncate=True)) <= 1e-4
    m1, m2 = oracle.marginal(ch, r.p, 1), oracle.marginal(ch, r.p, 2)
    assert m1[0] == pytest.approx(1 / 3, abs=1e-3)
    assert m2[0] == pytest.approx(1 / 6, abs=1e-3)


def test_dog_and_two_sheep_c100_untruncated():
    ch = TruncatedChain.from_env(dog_and_n_sheep(2, 0.5), 2, 100, "finite")
    r = oracle.stationary(ch)
    pf = oracle.product_form(ch, truncate=False)
    assert _tv(r.p, pf) + 0.5 * (1 - pf.sum()) <= 1e-4


@pytest.mark.parametrize("name", ["dog_sheep", "homogeneous_1_2", "one_sheep_many_dogs"])
def test_stationary_residual(name):
    ch = TruncatedChain.from_env(GOLDEN[name], 3, 10, "finite")
    r = oracle.stationary(ch, max_boundary_mass=1.0)
    assert r.residual < 1e-10
    assert r.p.min() >= 0 and r.p.sum() == pytest.approx(1.0, abs=1e-12)


def test_transient_zero_time():
    ch = TruncatedChain.from_env(GOLDEN["dog_sheep"], 3, 6, "lower")
    r = oracle.transient_distribution(ch, [1, 0, 2], 0.0)
    assert r.p[ch.index([1, 0, 2])] == 1.0 and r.p.sum() == 1.0


def test_transient_long_time_agrees_with_stationary():
    ch = TruncatedChain.from_env(dog_and_n_sheep(2, 0.5), 2, 60, "finite")
    st = oracle.stationary(ch, max_boundary_mass=1e-3)
    rmin = min(ch.a[1:3].min(), ch.b[1:3].min())
    tr = oracle.transient_distribution(ch, [0, 0], 50.0 / rmin * 20, max_boundary_mass=1e-3)
    assert _tv(tr.p, st.p) <= 1e-4


def test_transient_mass_and_bound():
    ch = TruncatedChain.from_env(GOLDEN["dog_sheep"], 4, 12, "lower")
    r = oracle.transient_distribution(ch, [0] * 4, 0.5)
    assert r.error_bound <= 1e-8
    assert 1 - r.p.sum() <= r.error_bound + 1e-15


def test_transient_golden_reference():
    ref = json.loads((GOLDEN_DIR / "dog_sheep_N4_C12_t0.5.json").read_text())
    ch = TruncatedChain.from_env(GOLDEN["dog_sheep"], ref["N"], ref["C"], ref["boundary"])
    np.testing.assert_array_equal(ch.states, np.asarray(ref["states"]))
    r = oracle.transient_distribution(ch, ref["initial"], ref["t"])
    np.testing.assert_allclose(r.p, ref["p"], rtol=1e-9, atol=1e-14)


def test_boundary_mass_guard():
    ch = TruncatedChain.from_env(GOLDEN["dog_sheep"], 2, 4, "lower")
    with pytest.raises(CapError):
        oracle.transient_distribution(ch, [4, 0], 5.0)


def test_state_space_limit():
    with pytest.raises(ValueError, match="exceed"):
        TruncatedChain.from_env(GOLDEN["dog_sheep"], 8, 40, "lower")


def test_positivity_required():
    env = RateEnvironment(((1.0, 0.0), (1.0, 1.0)), NoTail())
    with pytest.raises(HypothesisError):
        TruncatedChain.from_env(env, 1, 5, "lower")


def test_finite_needs_rate_n_plus_1():
    env = RateEnvironment(((1.0, 1.0),), NoTail())
    with pytest.raises((HypothesisError, IndexError, ValueError)):
        TruncatedChain.from_env(env, 1, 5, "finite")
