import io
import math

import numpy as np
import pytest

from excloud import engine, oracle
from excloud.engine import (
    ExplicitGaps,
    GapState,
    Heaviside,
    SimulationConfig,
    Simulator,
    TruncatedGeometric,
    final_gaps,
    init,
    particle_positions,
    run,
)
from excloud.rates import (
    ConstantTail,
    HypothesisError,
    NoTail,
    RateEnvironment,
    dog_and_n_sheep,
    dog_sheep,
    factorial,
    homogeneous,
    one_sheep_many_dogs,
)
from excloud.rng import make_rng

# -- state and initial conditions


def test_init_heaviside():
    s = init(SimulationConfig(dog_sheep()))
    assert s.gaps == {} and s.total_customers == 0 and s.x1 == 0


def test_init_explicit():
    s = init(SimulationConfig(dog_sheep(), ExplicitGaps({1: 2, 4: 1})))
    assert s.total_customers == 3 and s.frontier == 4
    assert s.gaps == {1: 2, 4: 1}


def test_init_truncated_geometric_mean():
    cfg = SimulationConfig(dog_sheep(), TruncatedGeometric(0.5, 20))
    rng = make_rng(123)
    totals = np.array([init(cfg, rng).total_customers for _ in range(10_000)])
    # 20 independent Geo(1/2) on {0,1,..}: mean 20, variance 40
    se = math.sqrt(40 / len(totals))
    assert abs(totals.mean() - 20) <= 3 * se


def test_from_gaps_rejects_bad_input():
    with pytest.raises(ValueError):
        GapState.from_gaps({0: 1})
    with pytest.raises(ValueError):
        GapState.from_gaps({2: -1})


def test_initial_from_dict_roundtrip():
    for ini in (Heaviside(), ExplicitGaps({2: 3}, x1=-4), TruncatedGeometric([0.1, 0.2], 2)):
        assert engine.initial_from_dict(ini.to_dict()) == ini
    with pytest.raises(ValueError):
        engine.initial_from_dict({"kind": "nope"})


def test_particle_positions():
    np.testing.assert_array_equal(particle_positions(GapState(), 4), [0, 1, 2, 3])
    s = GapState.from_gaps({1: 2}, x1=-2)
    np.testing.assert_array_equal(particle_positions(s, 3), [-2, 1, 2])


# -- validation


def test_semi_infinite_needs_tail():
    env = RateEnvironment(((1.0, 1.0), (1.0, 1.0)), NoTail())
    with pytest.raises(HypothesisError):
        Simulator(env, GapState(), make_rng(0))
    Simulator(env, GapState(), make_rng(0), boundary="lower", N=1)


def test_a1_failure_needs_frontier_cap():
    with pytest.raises(HypothesisError):
        Simulator(factorial(1), GapState(), make_rng(0))


def test_truncated_needs_n():
    with pytest.raises(ValueError):
        SimulationConfig(dog_sheep(), horizon=1.0, boundary="lower")


def test_zero_rate_rejected():
    env = RateEnvironment(((1.0, 0.0),), ConstantTail(1, 1))
    with pytest.raises(HypothesisError):
        Simulator(env, GapState(), make_rng(0))


# -- single events


def test_step_bookkeeping():
    sim = Simulator(dog_sheep(), GapState(), make_rng(5))
    seen = set()
    for _ in range(2000):
        n0, x0, t0 = sim.total, sim.x1, sim.time
        ev = sim.step()
        seen.add(ev.kind)
        assert ev.time_delta > 0 and sim.time == pytest.approx(t0 + ev.time_delta)
        assert sim.x1 - x0 == -(sim.total - n0)
        if ev.kind == "arrival":
            assert sim.total == n0 + 1
        elif ev.kind == "departure":
            assert sim.total == n0 - 1
        else:
            assert sim.total == n0
    assert {"arrival", "departure", "serve_left", "serve_right"} <= seen


def test_step_from_empty_is_arrival():
    sim = Simulator(homogeneous(1, 2), GapState(), make_rng(0))
    ev = sim.step()
    assert ev.kind == "arrival" and ev.k == 1
    assert sim.x1 == -1 and sim.state.gaps == {1: 1}


def test_lower_boundary_removes():
    env = dog_and_n_sheep(2)
    sim = Simulator(env, GapState.from_gaps({2: 5}), make_rng(1), boundary="lower", N=2)
    kinds = set()
    for _ in range(500):
        if sim.total == 0 and sim.time > 0:
            break
        kinds.add(sim.step().kind)
        assert sim.frontier <= 2
    assert "boundary_out" in kinds


def test_upper_boundary_injects():
    env = dog_and_n_sheep(2)
    sim = Simulator(env, GapState(), make_rng(2), boundary="upper", N=2)
    kinds = {sim.step().kind for _ in range(300)}
    assert "boundary_in" in kinds
    assert sim.frontier <= 2


def test_customer_cap_respected():
    env = dog_and_n_sheep(3)
    sim = Simulator(env, GapState(), make_rng(3), boundary="lower", N=3, customer_cap=4)
    for _ in range(3000):
        sim.step()
        assert sim.total <= 4


# -- runs


def test_run_horizon_zero():
    cfg = SimulationConfig(dog_sheep(), ExplicitGaps({1: 1, 3: 2}, x1=-1), horizon=0.0)
    s = run(cfg)
    assert s.n_events == 0
    assert s.final["gaps"] == s.initial["gaps"] == {"1": 1, "3": 2}
    assert s.final["x1"] == -1


def test_run_reproducible():
    cfg = SimulationConfig(dog_sheep(), horizon=200.0, seed=9)
    a, b = run(cfg), run(cfg)
    assert a.to_dict() == b.to_dict()


def test_trajectory_independent_of_snapshots():
    base = dict(env=dog_sheep(), horizon=300.0, seed=4)
    a = run(SimulationConfig(**base, snapshot_count=2))
    b = run(SimulationConfig(**base, snapshot_count=97))
    c = run(SimulationConfig(**base, snapshot_times=[1.5, 17.0, 250.0]))
    assert a.final == b.final == c.final
    assert a.n_events == b.n_events == c.n_events


def test_stepping_matches_advancing():
    env = dog_sheep()
    s1 = Simulator(env, GapState(), make_rng(8))
    s1.advance(math.inf, 500)
    s2 = Simulator(env, GapState(), make_rng(8))
    for _ in range(500):
        s2.step()
    assert s1.state.gaps == s2.state.gaps and s1.x1 == s2.x1
    assert s1.time == s2.time


def test_grow_keeps_trajectory():
    # a frontier far above the initial allocation forces several reallocations
    env = homogeneous(2, 1)
    s = run(SimulationConfig(env, horizon=2000.0, seed=1))
    assert s.max_frontier > 64
    assert s.final["total_customers"] == sum(s.final["gaps"].values())


def test_x1_log_consistent():
    cfg = SimulationConfig(dog_sheep(), horizon=100.0, seed=3, record_x1=True)
    s = run(cfg)
    t, x = s.x1_log
    assert t[0] == 0.0 and x[0] == 0
    assert np.all(np.diff(t) > 0) and np.all(np.abs(np.diff(x)) == 1)
    assert x[-1] == s.final["x1"]


def test_csv_stream_and_path(tmp_path):
    s = run(SimulationConfig(dog_sheep(), horizon=20.0, seed=1, window=3, snapshot_count=4))
    buf = io.StringIO()
    s.write_csv(buf)
    s.write_csv(tmp_path / "ts.csv")
    text = buf.getvalue()
    assert text == (tmp_path / "ts.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "t,x1,total_customers,eta_1,eta_2,eta_3"
    assert len(lines) == 6


def test_histograms_cover_burn_window():
    cfg = SimulationConfig(dog_sheep(), horizon=500.0, seed=2, window=4, hist_max=20,
                           burn_in=100.0)
    s = run(cfg)
    np.testing.assert_allclose(s.histograms.sum(axis=1), 400.0, rtol=1e-12)


def test_homogeneous_speed_and_bounded():
    s = run(SimulationConfig(homogeneous(1, 2), horizon=1000.0, seed=21, snapshot_count=50))
    assert abs(s.snapshot_x1[-1] / 1000.0) <= 0.05
    assert s.snapshot_total.max() < 100


def test_one_sheep_speed():
    s = run(SimulationConfig(one_sheep_many_dogs(), horizon=10_000.0, seed=22, window=1))
    assert -0.55 <= s.final["x1"] / 10_000.0 <= -0.45


def test_hist_matches_geometric_finite_system():
    env = dog_and_n_sheep(1, 0.5)  # single queue, rho = 0.75
    s = run(SimulationConfig(env, horizon=20_000.0, seed=6, boundary="upper", N=1,
                             window=1, hist_max=200))
    w = s.histograms[0] / s.histograms[0].sum()
    assert w[0] == pytest.approx(0.25, abs=0.02)


# -- batch kernel against the oracle


def test_final_gaps_matches_oracle():
    env = dog_sheep()
    N, C, t = 3, 8, 0.5
    ch = oracle.TruncatedChain.from_env(env, N, C, "lower")
    ref = oracle.transient_distribution(ch, [0] * N, t).p
    out = final_gaps(env, t, 200_000, 77, boundary="lower", N=N, customer_cap=C, window=N)
    rows, counts = np.unique(out, axis=0, return_counts=True)
    emp = np.zeros(ch.n_states)
    emp[[ch.index(r) for r in rows]] = counts / len(out)
    assert 0.5 * np.abs(emp - ref).sum() <= 0.01


def test_final_gaps_reproducible_and_grows():
    env = homogeneous(2, 1)
    a = final_gaps(env, 150.0, 50, 5, window=4)
    b = final_gaps(env, 150.0, 50, 5, window=4)
    np.testing.assert_array_equal(a, b)


def test_final_gaps_semi_matches_simulator_law():
    env = homogeneous(1, 2)
    out = final_gaps(env, 50.0, 20_000, 3, window=2)
    # stationary marginal of queue 1 is Geo(1 - 1/2): P(0) = 1/2
    assert np.mean(out[:, 0] == 0) == pytest.approx(0.5, abs=0.02)
