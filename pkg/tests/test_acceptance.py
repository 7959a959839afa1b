"""End-to-end acceptance checks; each records a one-line verdict for the run summary."""
import time
from collections import Counter

import numpy as np
import pytest
import rainflow as reference

import conftest
from essplan.conic.bnb import LIMIT, SOLVED, BnbOptions
from essplan.conic.model import ModelOptions, build_dispatch
from essplan.conic.solution import device_audit, socr_gap, solve_dispatch
from essplan.degradation import f_temperature, lifetime_years, rainflow
from essplan.economics import EconParams, annualized_capital, arbitrage, crf, DeviceDay, gap_penalty
from essplan.evaluate import strict
from essplan.fixtures import (
    ac5_network, dc3_toy, dc4_network, feeder_day, venue_day, venue_network, hybrid9_network, one_bus_toy,
    overload_case, write_case,
)
from essplan.pipeline import load_config, run_plan
from essplan.search import GeneSpace, SearchConfig, ga_sa_search
from essplan.storage import BessRating
from essplan.thermal import HvacAction, ThermalParams, ThermalState, simulate
from oracles import ToyBattery, enumerate_patterns, grid_search


def record(k, ok, detail):
    conftest.ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, detail


# 1 ---------------------------------------------------------------------------


@pytest.mark.parametrize("make", [ac5_network, dc4_network, hybrid9_network])
def test_criterion_1_relaxation_exact(make):
    net = make()
    t0 = time.perf_counter()
    sol = solve_dispatch(build_dispatch(net, feeder_day(net)))
    took = time.perf_counter() - t0
    gap = socr_gap(sol)
    prev_ok, prev_detail = conftest.ACCEPTANCE.get(1, (True, ""))
    ok = prev_ok and sol.status == SOLVED and gap <= 1e-4 and took < 60
    detail = (prev_detail + f" {net.name}: gap {gap:.1e} in {took:.2f}s;").strip()
    record(1, ok, detail)


# 2 ---------------------------------------------------------------------------


def test_criterion_2_brute_force():
    net, scen = dc3_toy()
    t0 = time.perf_counter()
    model = build_dispatch(net, scen, [BessRating(4, 1000.0, 400.0, soc0=0.5)], options=ModelOptions(thermal=False))
    sol = solve_dispatch(model)
    load3, load4 = scen.p_load(3), scen.p_load(4)
    best, tried = enumerate_patterns(ToyBattery(), load3, load4, scen.price)
    upper = grid_search(ToyBattery(), load3, load4, scen.price, levels=11)
    took = time.perf_counter() - t0
    rel = abs(sol.objective - best) / max(abs(best), 1e-12)
    ok = sol.status == SOLVED and tried == 4**4 and rel <= 1e-3 and sol.objective <= upper + 1e-9 and took < 300
    record(2, ok, f"MISOCP {sol.objective:.9g}, enumeration {best:.9g} (rel {rel:.1e}), 11-level grid {upper:.6g}, {took:.1f}s")


# 3 ---------------------------------------------------------------------------


def invariant_problems(sol):
    out = list(device_audit(sol))
    for d in sol.devices:
        if np.any(d.soc < 0.1 - 1e-6) or np.any(d.soc > 0.9 + 1e-6):
            out.append(f"{d.label}: SOC outside [0.1, 0.9]")
        if abs(d.soc[0] - d.soc[-1]) > 1e-6:
            out.append(f"{d.label}: SOC(0) != SOC(T)")
        if d.kind == "MESS" and np.any(d.soc[1:] < d.floors - 1e-6):
            out.append(f"{d.label}: below reserve floor")
    return out


def test_criterion_3_device_invariants():
    net = venue_network()
    layouts = [
        [BessRating(10, 2000.0, 500.0, 500.0, soc0=0.5)],
        [BessRating(10, 2000.0, 500.0, 500.0, soc0=0.3), BessRating(20, 2000.0, 1000.0, 1000.0, kind="MESS", soc0=0.6),
         BessRating(4, 2000.0, 1000.0, kind="MESS", soc0=0.5)],
    ]
    checked, problems = 0, []
    for devs in layouts:
        for season in ("winter", "summer"):
            # the planner's node budget; a budget-limited incumbent is still an accepted dispatch
            sol = solve_dispatch(build_dispatch(net, venue_day(net, season), devs), BnbOptions(node_limit=200))
            if not strict(sol):
                continue
            checked += 1
            problems += invariant_problems(sol)
    net5, scen = one_bus_toy()
    sol = solve_dispatch(build_dispatch(net5, scen, [BessRating(1, 1000.0, 100.0, soc0=0.5)]))
    checked += 1
    problems += invariant_problems(sol)
    record(3, checked >= 4 and not problems, f"{checked} accepted solutions, problems: {problems or 'none'}")


# 4 ---------------------------------------------------------------------------


def test_criterion_4_thermal_closure():
    net = ac5_network()
    worst_t, worst_res, flags, runs = 0.0, 0.0, [], 0
    for season in ("summer", "winter"):
        scen = feeder_day(net, season=season)
        sol = solve_dispatch(build_dispatch(net, scen, [BessRating(3, 1000.0, 300.0, 300.0, soc0=0.5)]))
        assert sol.ok
        th = sol.devices[0].thermal
        acts = [
            HvacAction(p_hot=th["p_hot"][t], p_cool=th["p_cool"][t], x_air=int(round(th["x_air"][t])), x_vent=int(round(th["x_vent"][t])))
            for t in range(sol.hours)
        ]
        reps = simulate(ThermalState(th["t_cess"][-1], th["t_bar"][-1]), acts, th["q_gen"], scen.t_ext, scen.v_wind, ThermalParams())
        sim = np.array([r.state.t_cess for r in reps])
        worst_t = max(worst_t, float(np.max(np.abs(sim - th["t_cess"]))))
        worst_res = max(worst_res, max(abs(r.residual) for r in reps))
        flags += [season for r in reps if r.out_of_bounds or r.state.t_cess > r.state.t_bar + 1e-9]
        runs += 1
    ok = worst_t <= 1e-6 and worst_res <= 1e-9 and not flags
    record(4, ok, f"{runs} days, max |dT| {worst_t:.1e} K, max residual {worst_res:.1e} kWh, bound/order breaches {len(flags)}")


# 5 ---------------------------------------------------------------------------


def test_criterion_5_degradation():
    f273, f333 = f_temperature(273.0), f_temperature(333.0)
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(100):
        s = rng.uniform(0.1, 0.9, size=int(rng.integers(3, 49))).tolist()
        ours = Counter((round(c.dod, 12), c.weight) for c in rainflow(s, closed=False))
        ref = Counter((round(r, 12), n) for r, _, n, _, _ in reference.extract_cycles(s) if r > 0)
        mismatches += ours != ref
    lives = [lifetime_years(d) == 0.2 / d for d in (1e-3, 0.0137, 0.05, 0.2)]
    ok = abs(f273 - 0.861) <= 1e-3 and abs(f333 - 0.492) <= 1e-3 and mismatches == 0 and all(lives)
    record(5, ok, f"f_T(273)={f273:.4f}, f_T(333)={f333:.4f}, rainflow mismatches {mismatches}/100, life exact {all(lives)}")


# 6 ---------------------------------------------------------------------------


def test_criterion_6_economics():
    p = EconParams()
    c = crf(0.10, 20)
    cap = annualized_capital(BessRating(1, 3500.0, 500.0), p)
    z = np.zeros(2)
    toy = DeviceDay("toy", "SESS", np.array([0.0, 90.0]), np.array([-100.0, 0.0]), z, z, z)
    arb = arbitrage(toy, [0.044, 0.196])
    fires = gap_penalty(p.gap_max, p) == p.c_pun and gap_penalty(p.gap_max * 1.5, p) == p.c_pun
    quiet = gap_penalty(p.gap_max * 0.999, p) == 0.0 and gap_penalty(0.0, p) == 0.0
    checks = {
        "crf": abs(c - 0.117460) <= 1e-6,
        "capital": abs(cap - 64720.5) <= 0.1,
        "arbitrage": round(arb, 10) == 13.24,
        "penalty": fires and quiet,
    }
    failed = [k for k, v in checks.items() if not v]
    record(6, not failed, f"crf {c:.6f}, capital {cap:.4f} (target 64720.5 +-0.1), arbitrage {arb:.10g}, penalty both sides {fires and quiet}; failed: {failed or 'none'}")


# 7 and 8 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def overload_run(tmp_path_factory):
    net, days = overload_case()
    path = write_case(net, days, tmp_path_factory.mktemp("overload"))
    cfg = load_config(path)
    assert cfg.search == SearchConfig()
    t0 = time.perf_counter()
    res = run_plan(cfg)
    return cfg, res, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_7_event_violations(overload_run):
    _, res, took = overload_run
    event = [d.scenario for d in res.days("joint")]
    count = {
        layout: sum(d.voltage_violations for d in res.days(layout) if d.scenario in event)
        for layout in ("baseline", "stage1", "joint")
    }
    ok = count["baseline"] > count["stage1"] > count["joint"] == 0 and took < 900
    ok = ok and all(d.status in (SOLVED, LIMIT) for d in res.days("joint"))
    record(7, ok, f"event-day voltage violations baseline {count['baseline']}, stage-1 {count['stage1']}, joint {count['joint']}; {took:.0f}s")


def bowl(v):
    return float(np.sum((v - 3.0) ** 2))


@pytest.mark.slow
def test_criterion_8_determinism_and_progress(overload_run):
    cfg, res, _ = overload_run
    space = GeneSpace(("x", "y"), [-10.0, -10.0], [10.0, 10.0], [0.0, 0.0], [False, False])
    a = ga_sa_search(space, bowl, SearchConfig(seed=11))
    b = ga_sa_search(space, bowl, SearchConfig(seed=11))
    same = a.trace == b.trace and len(a.trace) == 61

    def monotone(trace):
        return len(trace) == 61 and all(y <= x for x, y in zip(trace, trace[1:]))

    traces = [[h["best_ever"] for h in st.trace] for st in (res.stage1, res.stage2)]
    # a second run of fixture 7 with the same seed must trace the same fitness bit for bit
    again = run_plan(cfg)
    same7 = traces == [[h["best_ever"] for h in st.trace] for st in (again.stage1, again.stage2)]
    ok = same and same7 and monotone(a.trace) and all(monotone(t) for t in traces)
    record(8, ok, f"convex identical {same}, fixture-7 identical {same7}, monotone convex {monotone(a.trace)}, "
                  f"monotone fixture-7 {[monotone(t) for t in traces]}")
