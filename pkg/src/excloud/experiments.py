"""Experiment drivers behind the command-line subcommands.

Each driver takes a validated config dict plus ``seed``, ``replicates`` and
``jobs`` and returns an :class:`Outcome`: a JSON-ready result, a verdict
(``True``/``False`` against configured tolerances, ``None`` when nothing is
checked) and any extra text artifacts such as CSV files.

Replicate ``i`` always draws from ``make_rng(seed, i)``, so results do not
depend on ``jobs``.  Bulk terminal-state experiments instead run all
replicates from the single stream ``make_rng(seed)`` inside a compiled loop.
"""

from __future__ import annotations

import io
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coupling, engine, oracle, stats, traffic, walk
from .config import resolve_env
from .rates import RateEnvironment, check_hypotheses, rate_at
from .rng import make_rng

__all__ = ["Outcome", "RUNNERS", "dyadic_times"]


@dataclass
class Outcome:
    result: dict
    passed: bool | None = None
    artifacts: dict[str, str] = field(default_factory=dict)


def _pmap(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _initial(spec) -> engine.Initial:
    return engine.Heaviside() if spec is None else engine.initial_from_dict(spec)


def _close(x: float, y: float, rtol: float, atol: float) -> bool:
    if x is None or y is None:
        return x is y
    if math.isinf(x) or math.isinf(y):
        return x == y
    return abs(x - y) <= atol + rtol * abs(y)


# -- traffic ---------------------------------------------------------------


def run_traffic(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    env = resolve_env(cfg["env"])
    K = cfg.get("K", 10)
    v0r = traffic.compute_v0(env)
    V = traffic.admissible_set(env)
    vf = traffic.classify_vf(env)
    tab = traffic.compute_tables(env, K)
    res = {
        "env": env.to_dict(),
        "hypotheses": check_hypotheses(env).as_dict(),
        "v0": v0r.v0,
        "v0_status": v0r.status,
        "V": V.as_dict(),
        "VF": {"class": vf.kind, "v": vf.v, "exactness": vf.exactness},
        "alpha": tab.alpha[1:].tolist(),
        "beta": tab.beta[1:].tolist(),
    }
    if not V.empty and V.right_end != "indeterminate":
        res["rho_minimal"] = traffic.solve_rho(env, v0r.v0, K).rho.tolist()
    sols = []
    for v in cfg.get("v", []):
        s = traffic.solve_rho(env, float(v), K)
        sols.append({"v": s.v, "rho": s.rho.tolist(), "admissible": s.admissible,
                     "summable": s.summable, "tail_limit": s.tail_limit})
    if sols:
        res["solutions"] = sols
    fin = []
    for N in cfg.get("finite_N", []):
        f = traffic.finite_speed(env, N)
        fin.append({"N": N, "vN": f.vN, "rhoN": f.rhoN.tolist(), "vN0": f.vN0,
                    "rhoN0": f.rhoN0.tolist()})
    if fin:
        res["finite"] = fin
    passed = None
    exp = cfg.get("expect")
    if exp:
        rtol, atol = exp.get("rtol", 1e-10), exp.get("atol", 1e-12)
        checks = {}
        if "v0" in exp:
            checks["v0"] = _close(v0r.v0, exp["v0"], rtol, atol)
        if "V_empty" in exp:
            checks["V_empty"] = V.empty == exp["V_empty"]
        if "V_left" in exp:
            checks["V_left"] = not V.empty and _close(V.v0, exp["V_left"], rtol, atol)
        if "V_right" in exp:
            checks["V_right"] = not V.empty and _close(V.v1, exp["V_right"], rtol, atol)
        if "V_right_open" in exp:
            checks["V_right_open"] = V.as_dict()["right_open"] == exp["V_right_open"]
        if "VF" in exp:
            checks["VF"] = vf.kind == exp["VF"]
        res["checks"] = checks
        passed = all(checks.values())
    return Outcome(res, passed)


# -- classify ---------------------------------------------------------------


def run_classify(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    env = resolve_env(cfg["env"])
    tol = cfg.get("tolerance", 1e-12)
    wc = walk.classify(env, cfg.get("Kmax", 10**6))
    v0 = traffic.compute_v0(env).v0
    a1 = rate_at(env, 1)[0]
    gap = abs(abs(v0) - a1 * wc.p0)
    res = {
        "env": env.to_dict(),
        "class": wc.kind,
        "p0": wc.p0,
        "p0_bracket": list(wc.p0_bracket),
        "exactness": wc.exactness,
        "v0": v0,
        "v0_consistency": {"abs_v0": abs(v0), "a1_p0": a1 * wc.p0, "gap": gap, "tolerance": tol},
    }
    return Outcome(res, gap <= tol)


# -- simulate -----------------------------------------------------------------


def _sim_config(env, cfg: dict, seed: int) -> engine.SimulationConfig:
    return engine.SimulationConfig(
        env=env,
        initial=_initial(cfg.get("initial")),
        horizon=float(cfg.get("horizon", 0.0)),
        seed=seed,
        snapshot_times=cfg.get("snapshot_times"),
        snapshot_count=cfg.get("snapshot_count"),
        window=cfg.get("window", 32),
        hist_max=cfg.get("hist_max", 64),
        burn_in=cfg.get("burn_in"),
        boundary=cfg.get("boundary", "semi_infinite"),
        N=cfg.get("N"),
        customer_cap=cfg.get("customer_cap"),
        frontier_cap=cfg.get("frontier_cap"),
        record_x1=cfg.get("record_x1", False),
    )


def _simulate_one(args):
    cfg, seed, i = args
    env = resolve_env(cfg["env"])
    return engine.run(_sim_config(env, cfg, seed), make_rng(seed, i))


def run_simulate(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    sums = _pmap(_simulate_one, [(cfg, seed, i) for i in range(replicates)], jobs)
    res = {"per_replicate": [dict(s.to_dict(), replicate=i) for i, s in enumerate(sums)]}
    arts = {}
    if cfg.get("csv", True):
        for i, s in enumerate(sums):
            buf = io.StringIO()
            s.write_csv(buf)
            arts[f"timeseries_r{i}.csv"] = buf.getvalue()
            if s.x1_log is not None:
                arts[f"x1_r{i}.csv"] = _csv(("t", "x1"), zip(*s.x1_log))
    return Outcome(res, None, arts)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else int(x) for x in r])
    return buf.getvalue()


# -- couple -------------------------------------------------------------------


def _random_pair(rng, queues: int, max_count: int):
    lo = rng.integers(0, max_count + 1, queues)
    extra = rng.integers(0, max_count + 1, queues)
    low = engine.GapState.from_gaps({k + 1: int(c) for k, c in enumerate(lo) if c})
    up = engine.GapState.from_gaps({k + 1: int(c) for k, c in enumerate(lo + extra) if c})
    return low, up


def _state(spec) -> engine.GapState:
    ini = _initial(spec)
    if isinstance(ini, engine.TruncatedGeometric):
        raise ValueError("coupling needs a deterministic initial state")
    if isinstance(ini, engine.Heaviside):
        return engine.GapState()
    return engine.GapState.from_gaps(dict(ini.gaps), ini.x1)


def _couple_one(args):
    cfg, seed, i = args
    env = resolve_env(cfg["env"])
    cap = cfg.get("cap", 256)
    fld = coupling.build_field(env, cfg["window"], cap, make_rng(seed, i))
    out = {"replicate": i, "n_arrows": fld.n_arrows, "runs": []}
    csvs = {}
    if cfg["mode"] == "sandwich":
        init = _state(cfg.get("initial"))
        stride = cfg.get("csv_stride", 100)
        for N in cfg.get("N", [4]):
            tr = coupling.sandwich_run(env, init, N, cfg["window"], None, fld=fld)
            out["runs"].append(tr.report())
            if cfg.get("csv", True):
                idx = np.arange(0, tr.n_arrows, stride)
                rows = zip(idx, fld.times[idx], tr.x1_lower[idx], tr.x1_semi[idx], tr.x1_upper[idx])
                csvs[f"sandwich_r{i}_N{N}.csv"] = _csv(
                    ("arrow", "t", "x1_lower", "x1_semi_infinite", "x1_upper"), rows
                )
    else:
        if "random_pairs" in cfg:
            rp = cfg["random_pairs"]
            low, up = _random_pair(make_rng(seed, i, 1), rp["queues"], rp["max_count"])
        else:
            low, up = _state(cfg.get("lower")), _state(cfg.get("upper"))
        r = coupling.two_class_run(env, low, up, cfg["window"], None, fld=fld)
        rep = r.report()
        rep["lower"] = low.gaps
        rep["upper"] = up.gaps
        out["runs"].append({k: ({str(a): b for a, b in v.items()} if isinstance(v, dict) else v)
                            for k, v in rep.items()})
    return out, csvs


def run_couple(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    outs = _pmap(_couple_one, [(cfg, seed, i) for i in range(replicates)], jobs)
    reps = [o for o, _ in outs]
    arts = {}
    for _, c in outs:
        arts.update(c)
    total_v = sum(r["violations"] for o in reps for r in o["runs"])
    min_arrows = cfg.get("min_arrows", 0)
    arrows_ok = all(o["n_arrows"] >= min_arrows for o in reps)
    res = {"mode": cfg["mode"], "violations": total_v, "min_arrows": min_arrows,
           "arrows_ok": arrows_ok, "per_replicate": reps}
    return Outcome(res, total_v == 0 and arrows_ok, arts)


# -- oracle -------------------------------------------------------------------


def run_oracle(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    env = resolve_env(cfg["env"])
    ch = oracle.TruncatedChain.from_env(env, cfg["N"], cfg["C"], cfg.get("boundary", "lower"))
    mb = cfg.get("max_boundary_mass", oracle.DEFAULT_MAX_BOUNDARY)
    res = {"N": ch.N, "C": ch.C, "boundary": ch.boundary, "n_states": ch.n_states,
           "env": env.to_dict(), "mode": cfg["mode"]}
    if cfg["mode"] == "stationary":
        r = oracle.stationary(ch, mb)
        res.update(r.as_dict())
    else:
        init = cfg.get("initial_state", [0] * ch.N)
        r = oracle.transient_distribution(ch, init, cfg.get("t", 0.0), max_boundary_mass=mb)
        res.update(r.as_dict())
        res["initial_state"] = list(init)
    p = r.p
    res["marginals"] = [oracle.marginal(ch, p, k).tolist() for k in range(1, ch.N + 1)]
    keep = p > 0
    res["states"] = ch.states[keep].tolist()
    res["p"] = p[keep].tolist()
    passed = None
    cmp = cfg.get("compare_product_form")
    if cmp:
        pf = oracle.product_form(ch, cmp.get("truncate", True))
        tv = 0.5 * (np.abs(p - pf).sum() + max(0.0, 1.0 - pf.sum()))
        res["product_form_tv"] = tv
        res["product_form_tv_max"] = cmp["tv_max"]
        passed = bool(tv <= cmp["tv_max"])
    return Outcome(res, passed)


# -- converge -------------------------------------------------------------------


def _target_rho(env: RateEnvironment, cfg: dict, n: int) -> np.ndarray:
    spec = cfg.get("rho", "minimal")
    if isinstance(spec, list):
        if len(spec) < n:
            raise ValueError("explicit rho shorter than the number of queues")
        return np.asarray(spec[:n], float)
    if spec == "finite":
        f = traffic.finite_speed(env, cfg["N"])
        rho = f.rhoN if cfg.get("boundary") == "upper" else f.rhoN0
        return rho[:n]
    v0 = traffic.compute_v0(env).v0
    return traffic.solve_rho(env, v0, n).rho


def _hist_one(args):
    cfg, seed, i = args
    env = resolve_env(cfg["env"])
    q = cfg.get("queues", 5)
    c = dict(cfg, window=q, snapshot_count=1)
    s = engine.run(_sim_config(env, c, seed), make_rng(seed, i))
    return s.histograms


def run_converge(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    env = resolve_env(cfg["env"])
    mode = cfg["mode"]
    q = cfg.get("queues", 5)
    tv_max = cfg["tv_max"]
    res = {"mode": mode, "env": env.to_dict(), "replicates": replicates, "tv_max": tv_max}
    if mode == "time_average":
        rho = _target_rho(env, cfg, q)
        hists = _pmap(_hist_one, [(cfg, seed, i) for i in range(replicates)], jobs)
        per = np.array([[stats.tv_to_geometric(
            stats.MarginalHistogram.from_weights(k + 1, h[k], overflow=True), rho[k])
            for k in range(q)] for h in hists])
        agg = cfg.get("aggregate", "median")
        if agg == "median":
            tv = np.median(per, axis=0)
        else:
            pooled = np.sum(hists, axis=0)
            tv = np.array([stats.tv_to_geometric(
                stats.MarginalHistogram.from_weights(k + 1, pooled[k], overflow=True), rho[k])
                for k in range(q)])
        res.update(rho=rho.tolist(), aggregate=agg, tv=tv.tolist(), tv_per_replicate=per.tolist())
        return Outcome(res, bool(np.all(tv <= tv_max)))

    init = _state(cfg.get("initial"))
    if mode == "terminal_joint":
        rho = _target_rho(env, cfg, q)
        out = engine.final_gaps(env, cfg["horizon"], replicates, seed, initial=init,
                                boundary=cfg.get("boundary", "semi_infinite"), N=cfg.get("N"),
                                customer_cap=cfg.get("customer_cap"), window=q)
        tv = stats.tv_product_geometric(out, rho)
        res.update(rho=rho.tolist(), tv=tv,
                   marginal_means=out.mean(axis=0).tolist())
        return Outcome(res, bool(tv <= tv_max))

    # oracle_transient: engine replicates against the uniformization solver
    N, C = cfg["N"], cfg["C"]
    boundary = cfg.get("boundary", "lower")
    ch = oracle.TruncatedChain.from_env(env, N, C, "finite" if boundary == "upper" else "lower")
    tr = oracle.transient_distribution(ch, init.window(N), cfg["horizon"])
    out = engine.final_gaps(env, cfg["horizon"], replicates, seed, initial=init,
                            boundary=boundary, N=N, customer_cap=C, window=N)
    rows, counts = np.unique(out, axis=0, return_counts=True)
    emp = np.zeros(ch.n_states)
    emp[[ch.index(r) for r in rows]] = counts / replicates
    tv = 0.5 * float(np.abs(emp - tr.p).sum())
    res.update(N=N, C=C, t=cfg["horizon"], tv=tv, oracle=tr.as_dict())
    return Outcome(res, bool(tv <= tv_max))


# -- speed ---------------------------------------------------------------------


def _speed_one(args):
    cfg, seed, i = args
    env = resolve_env(cfg["env"])
    T = float(cfg["horizon"])
    nb = cfg.get("batches", 100)
    sc = engine.SimulationConfig(env, _initial(cfg.get("initial")), T, seed,
                                 snapshot_count=nb, window=1)
    s = engine.run(sc, make_rng(seed, i))
    burn = cfg.get("burn_in", 0.1 * T)
    return stats.speed(s.snapshot_t, s.snapshot_x1, burn_in=burn).as_dict()


def run_speed(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    ests = _pmap(_speed_one, [(cfg, seed, i) for i in range(replicates)], jobs)
    vals = np.array([e["value"] for e in ests])
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else ests[0]["se"]
    res = {"estimate": mean, "se": se, "per_replicate": ests}
    passed = None
    if "expected" in cfg:
        tol = cfg.get("tolerance", 0.05)
        res.update(expected=cfg["expected"], tolerance=tol)
        passed = bool(abs(mean - cfg["expected"]) <= tol)
    return Outcome(res, passed)


# -- scaling ---------------------------------------------------------------------


def dyadic_times(t_min: float, t_max: float) -> list[float]:
    """``t_min * 2^j`` up to ``t_max``, plus ``t_max`` itself."""
    out = []
    t = float(t_min)
    while t < t_max:
        out.append(t)
        t *= 2
    out.append(float(t_max))
    return out


def _scaling_one(args):
    cfg, seed, i = args
    env = resolve_env(cfg["env"])
    grid = dyadic_times(cfg["t_min"], cfg["t_max"])
    extra = cfg.get("escape", {}).get("times", [])
    times = sorted(set(grid) | set(float(t) for t in extra))
    sc = engine.SimulationConfig(env, _initial(cfg.get("initial")), max(times), seed,
                                 snapshot_times=times, window=1)
    s = engine.run(sc, make_rng(seed, i))
    return dict(zip(s.snapshot_t.tolist(), s.snapshot_x1.tolist()))


def run_scaling(cfg: dict, seed: int, replicates: int, jobs: int) -> Outcome:
    paths = _pmap(_scaling_one, [(cfg, seed, i) for i in range(replicates)], jobs)
    grid = dyadic_times(cfg["t_min"], cfg["t_max"])
    n_slope = min(cfg.get("slope_replicates", replicates), replicates)
    fits, ratios = [], []
    for p in paths[:n_slope]:
        x = np.array([p[t] for t in grid])
        try:
            fits.append(stats.scaling_exponent(grid, x).as_dict())
        except stats.InsufficientData as e:
            fits.append({"slope": None, "error": str(e)})
        xT = -p[grid[-1]]
        ratios.append(math.log(xT) / math.log(grid[-1]) if xT > 1 else None)
    slopes = [f["slope"] for f in fits if f.get("slope") is not None]
    res = {"times": grid, "fits": fits, "terminal_ratio": ratios,
           "median_slope": float(np.median(slopes)) if slopes else None,
           "x1": [[p[t] for t in sorted(p)] for p in paths], "x1_times": sorted(paths[0])}
    checks = {}
    if "median_slope" in cfg:
        lo, hi = cfg["median_slope"]
        checks["median_slope"] = len(slopes) == n_slope and lo <= res["median_slope"] <= hi
    if "terminal_ratio" in cfg:
        lo, hi = cfg["terminal_ratio"]
        checks["terminal_ratio"] = all(r is not None and lo <= r <= hi for r in ratios)
    if "escape" in cfg:
        esc = cfg["escape"]
        ts = sorted(float(t) for t in esc["times"])
        frac = [float(np.mean([p[t] < -esc["level"] for p in paths])) for t in ts]
        res["escape"] = {"level": esc["level"], "times": ts, "fraction": frac}
        checks["escape_nondecreasing"] = all(a <= b for a, b in zip(frac, frac[1:]))
        if "min_final_fraction" in esc:
            checks["escape_final"] = frac[-1] > esc["min_final_fraction"]
    res["checks"] = checks
    return Outcome(res, all(checks.values()) if checks else None)


RUNNERS = {
    "traffic": run_traffic,
    "classify": run_classify,
    "simulate": run_simulate,
    "couple": run_couple,
    "oracle": run_oracle,
    "converge": run_converge,
    "speed": run_speed,
    "scaling": run_scaling,
}
