"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with ``pytest -s tests/test_acceptance.py`` to see them
stream).  Budgets and tolerances are asserted, not aspirational.
"""

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gridcut import (brute_force_cutset_oracle, build_flow_state,
                     build_problem, compute_lodf, compute_ptdf,
                     cut_constraints_from_screening, dc_power_flow,
                     feasibility_test, load_case, post_contingency_flows,
                     rank_contingencies, screen_all, screen_post_contingency,
                     select_top_fraction, solve, update_after_outage,
                     update_after_redispatch, verify_solution)
from gridcut.flowgraph import InjectionDelta, cut_transfer
from gridcut.screening import refresh_after_outage, refresh_after_redispatch

from casegen import balanced_gen_delta, random_case
from scen118 import generate_scenarios, run_pipeline

DATA = os.path.join(os.path.dirname(__file__), "..", "src", "gridcut", "data")
N_SCENARIOS = 40
SCENARIO_SEED = 2024


def report(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""),
          flush=True)
    assert ok, f"{name}: {detail}"


# -- criterion 1: five-bus worked example ------------------------------------

def test_c1_worked_example_five_bus():
    t0 = time.perf_counter()
    net = load_case(os.path.join(DATA, "fig1_5bus.json"))
    fs = build_flow_state(net)
    side_a = [3, 4]    # internal ids of buses 4 and 5
    f_k, r_k = cut_transfer(fs, side_a)
    res = feasibility_test(fs, net.branch_index("4-3"))
    elapsed = time.perf_counter() - t0
    ok = (res.is_special
          and abs(res.t_m - (-30.0)) <= 1e-6
          and abs(f_k - 360.0) <= 1e-6
          and abs(r_k - 580.0) <= 1e-6
          and {"4-3", "5-3", "5-1"} <= {net.branches[b].name for b in res.k_crit}
          and elapsed < 1.0)
    report("C1 five-bus worked example", ok,
           f"T_m={res.t_m:.6f} MW, (F,R)=({f_k:.1f},{r_k:.1f}), {elapsed:.2f}s")


# -- criterion 2: screening equals exhaustive bipartition oracle -------------

def test_c2_screening_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(97)
    cases = 0
    branches_checked = 0
    while cases < 200:
        n = int(rng.integers(4, 13))
        extra = int(rng.integers(1, max(2, 21 - n)))   # branches <= 20
        net = random_case(rng, n_buses=n, extra_edges=extra,
                          tightness=(1.02, 1.5))
        if len(net.branches) > 20:
            continue
        fs = build_flow_state(net)
        for b in net.in_service_ids():
            ours = feasibility_test(fs, b)
            ref = brute_force_cutset_oracle(net, fs.injections, b)
            assert ours.is_special == ref.is_special, \
                f"case {cases} branch {net.branches[b].name}"
            if ref.is_special:
                assert abs(ours.t_m - ref.t_m) <= 1e-6
            branches_checked += 1
        cases += 1
    elapsed = time.perf_counter() - t0
    report("C2 screening/oracle equivalence", elapsed < 60.0,
           f"{cases} cases, {branches_checked} branch verdicts, {elapsed:.1f}s")


# -- criterion 3: incremental maintenance equals rebuild ---------------------

def _verdicts(screening):
    return {b: (r.is_special, None if r.t_m is None else round(r.t_m, 6))
            for b, r in screening.results.items()}


def _assert_same_verdicts(merged, full):
    assert set(merged.results) == set(full.results)
    for b, r in merged.results.items():
        f = full.results[b]
        assert r.is_special == f.is_special
        if r.is_special:
            assert abs(r.t_m - f.t_m) <= 1e-6


def test_c3_incremental_equals_rebuild():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    sequences = 0
    steps = 0
    while sequences < 50:
        net = random_case(rng, n_buses=int(rng.integers(6, 13)),
                          extra_edges=int(rng.integers(3, 8)),
                          tightness=(1.02, 1.45))
        fs = build_flow_state(net)
        screening = screen_all(fs)
        did_outage = did_redispatch = False
        for _ in range(6):
            if rng.random() < 0.5:
                from gridcut import apply_outage
                from gridcut.model import connected_components
                pool = [b for b in fs.net.in_service_ids()]
                rng.shuffle(pool)
                applied = False
                for b in pool:
                    if len(connected_components(apply_outage(fs.net, b))) != 1:
                        continue
                    try:
                        fs2, touched = update_after_outage(fs, b)
                    except Exception:
                        continue
                    screening = refresh_after_outage(screening, fs2, b, touched)
                    fs = fs2
                    applied = True
                    break
                if not applied:
                    continue
                did_outage = True
            else:
                vec = balanced_gen_delta(rng, fs.net)
                if vec is None:
                    continue
                if np.any(np.abs(dc_power_flow(fs.net, fs.injections + vec))
                          > fs.net.branch_rating - 1e-9):
                    continue
                delta = InjectionDelta.from_vector(vec, tol=1e-9)
                fs, touched = update_after_redispatch(fs, delta)
                screening = refresh_after_redispatch(screening, fs, touched)
                did_redispatch = True
            full = screen_all(build_flow_state(fs.net, fs.injections))
            _assert_same_verdicts(screening, full)
            steps += 1
        if did_outage and did_redispatch:
            sequences += 1
    elapsed = time.perf_counter() - t0
    report("C3 incremental maintenance equals rebuild", elapsed < 120.0,
           f"{sequences} sequences, {steps} steps checked, {elapsed:.1f}s")


# -- criterion 4: sensitivity exactness ---------------------------------------

def test_c4_sensitivity_exactness():
    rng = np.random.default_rng(103)
    worst_ptdf = 0.0
    worst_lodf = 0.0
    for _ in range(6):
        n = int(rng.integers(20, 51))
        net = random_case(rng, n_buses=n, extra_edges=int(rng.integers(6, 15)),
                          n_gens=5, n_loads=8)
        inj = net.injections()
        base = dc_power_flow(net, inj)
        ptdf = compute_ptdf(net)
        delta = rng.normal(size=n) * 8.0
        delta -= delta.mean()
        predicted = base + ptdf.flow_change(delta)
        resolved = dc_power_flow(net, inj + delta)
        worst_ptdf = max(worst_ptdf, float(np.max(np.abs(predicted - resolved))))
        lodf = compute_lodf(net, ptdf)
        from gridcut import apply_outage
        for k in net.in_service_ids():
            if k in lodf.undefined_outages:
                continue
            fc = post_contingency_flows(base, lodf, k)
            ref = dc_power_flow(apply_outage(net, k), inj)
            worst_lodf = max(worst_lodf, float(np.max(np.abs(fc - ref))))
    ok = worst_ptdf < 1e-8 and worst_lodf < 1e-8
    report("C4 sensitivity exactness vs re-solves", ok,
           f"worst PTDF err {worst_ptdf:.2e} MW, worst LODF err {worst_lodf:.2e} MW")


# -- criterion 5: dispatch QP correctness -------------------------------------

def _staged(net, top=0.3):
    flows = dc_power_flow(net, net.injections())
    ptdf = compute_ptdf(net)
    lodf = compute_lodf(net, ptdf)
    ranked = rank_contingencies(net, flows, lodf)
    screenable = [r for r in select_top_fraction(ranked, top)
                  if np.isfinite(r.severity)]
    violations = screen_post_contingency(net, flows, lodf, screenable)
    screening = screen_all(build_flow_state(net))
    return flows, ptdf, lodf, violations, screening


def test_c5_qp_correctness():
    import json

    from gridcut import parse_case

    # hand-solved toy: parallel pair, one cut row forcing a 10 MW reduction
    doc = {"mva_base": 100.0,
           "buses": [{"id": 1}, {"id": 2}],
           "branches": [
               {"from": 1, "to": 2, "susceptance": 5.0, "rating": 90.0},
               {"from": 1, "to": 2, "susceptance": 5.0, "rating": 130.0}],
           "generators": [
               {"bus": 1, "p": 100.0, "p_min": 0.0, "p_max": 200.0,
                "cost": [0.0, 20.0, 0.05]},
               {"bus": 2, "p": 60.0, "p_min": 0.0, "p_max": 200.0,
                "cost": [0.0, 20.0, 0.10]}],
           "loads": [{"bus": 2, "p": 160.0, "shed_cost": 10000.0}]}
    net = parse_case(json.dumps(doc))
    flows, ptdf, lodf, violations, screening = _staged(net)
    prob = build_problem("rca", net, flows, ptdf, lodf,
                         violations=violations, cutsets=screening)
    sol = solve(prob)
    hand_ok = (sol.status == "optimal"
               and np.allclose(sol.delta_g, [-10.0, 10.0], atol=1e-6)
               and abs(sol.objective - 35.0) <= 1e-6)

    # KKT residuals on the shipped instances
    kkt_ok = True
    shipped = [load_case(os.path.join(DATA, "fig1_5bus.json")),
               load_case(os.path.join(DATA, "case118.json"))]
    from gridcut import apply_outage
    shipped.append(apply_outage(shipped[1], "15-33"))
    for case in shipped:
        fl, pt, lo, vi, sc = _staged(case)
        for mode in ("ica", "rca", "sced", "dcopf"):
            p = build_problem(mode, case, fl, pt, lo, violations=vi, cutsets=sc)
            s = solve(p)
            kkt_ok &= s.status == "optimal" and s.kkt_residual <= 1e-6

    # relaxation ordering on random instances
    rng = np.random.default_rng(107)
    checked = 0
    ordering_ok = True
    from gridcut import InfeasibleFlowError, apply_outage
    from gridcut.model import connected_components
    while checked < 100:
        net_r = random_case(rng, n_buses=int(rng.integers(6, 12)),
                            extra_edges=int(rng.integers(3, 7)),
                            tightness=(1.0, 1.25))
        pool = net_r.in_service_ids()
        rng.shuffle(pool)
        net_o = None
        for b in pool:
            cand = apply_outage(net_r, b)
            if len(connected_components(cand)) == 1:
                net_o = cand
                break
        if net_o is None:
            continue
        try:
            fl, pt, lo, vi, sc = _staged(net_o, top=1.0)
        except InfeasibleFlowError:
            continue
        objs = {}
        feasible = True
        for mode in ("ica", "rca", "sced", "dcopf"):
            p = build_problem(mode, net_o, fl, pt, lo, violations=vi, cutsets=sc)
            s = solve(p)
            if s.status != "optimal":
                feasible = False
                break
            ordering_ok &= s.kkt_residual <= 1e-6
            objs[mode] = s.objective
        if not feasible:
            continue
        ordering_ok &= objs["dcopf"] <= objs["rca"] + 1e-6
        ordering_ok &= objs["rca"] <= objs["ica"] + 1e-6
        ordering_ok &= objs["sced"] <= objs["ica"] + 1e-6
        checked += 1
    report("C5 dispatch QP correctness", hand_ok and kkt_ok and ordering_ok,
           f"hand toy {'ok' if hand_ok else 'BAD'}, shipped KKT "
           f"{'ok' if kkt_ok else 'BAD'}, ordering on {checked} instances "
           f"{'ok' if ordering_ok else 'BAD'}")


# -- criteria 6 + 8: methodology efficacy and speed ordering ------------------

def _run_one(args):
    seq, mode = args
    net = load_case(os.path.join(DATA, "case118.json"))
    session, outcomes, records = run_pipeline(net, seq, mode)
    trigger_count = sum(len(r.triggers_after) for r in records)
    unresolved = any(r.unresolved for r in records)
    residual_specials = sum(len(r.residual_specials) for r in records)
    verify_ok = True
    solve_walls = []
    if mode in ("ica", "rca"):
        for out in outcomes:
            if out.solution.status != "optimal":
                verify_ok = False
                continue
            rep = verify_solution(out.solution.problem, out.solution)
            blocks_ok = all(v <= 1e-6 for v in rep.block_residuals.values())
            verify_ok &= blocks_ok and rep.kkt_residual <= 1e-6
            if mode == "ica":
                verify_ok &= not rep.unmodeled_overloads
    # fresh full rescreen of the final committed state
    fresh = screen_all(build_flow_state(session.net))
    final_specials = len(fresh.special_assets)
    for out in outcomes:
        solve_walls.append(out.wall_s)
    return dict(seq=seq, mode=mode, triggers=trigger_count,
                unresolved=unresolved, residual_specials=residual_specials,
                final_specials=final_specials, verify_ok=verify_ok,
                solve_walls=solve_walls)


@pytest.fixture(scope="module")
def methodology_results():
    t0 = time.perf_counter()
    net = load_case(os.path.join(DATA, "case118.json"))
    scenarios = generate_scenarios(net, count=N_SCENARIOS, seed=SCENARIO_SEED)
    assert len(scenarios) == N_SCENARIOS
    tasks = [(seq, mode) for seq in scenarios
             for mode in ("ica", "sced", "rca", "dcopf")]
    results = {}
    with ProcessPoolExecutor(max_workers=2) as pool:
        for res in pool.map(_run_one, tasks, chunksize=4):
            results[(res["seq"], res["mode"])] = res
    return scenarios, results, time.perf_counter() - t0


def test_c6_methodology_efficacy(methodology_results):
    scenarios, results, elapsed = methodology_results
    problems = []
    agg = {"ica": 0, "sced": 0, "rca": 0, "dcopf": 0}
    for seq in scenarios:
        counts = {m: results[(seq, m)]["triggers"]
                  for m in ("ica", "sced", "rca", "dcopf")}
        for m in counts:
            agg[m] += counts[m]
        r_i = results[(seq, "ica")]
        r_r = results[(seq, "rca")]
        if r_i["unresolved"] or r_r["unresolved"]:
            problems.append(f"{seq}: unresolved step")
        if r_i["final_specials"] or r_i["residual_specials"]:
            problems.append(f"{seq}: iCA left special assets")
        if not r_i["verify_ok"]:
            problems.append(f"{seq}: iCA verification failed")
        if r_r["final_specials"] or r_r["residual_specials"]:
            problems.append(f"{seq}: rCA left special assets")
        if not r_r["verify_ok"]:
            problems.append(f"{seq}: rCA verification failed")
        if counts["ica"] > counts["sced"]:
            problems.append(f"{seq}: triggers ica {counts['ica']} > sced "
                            f"{counts['sced']}")
        if counts["rca"] > counts["dcopf"]:
            problems.append(f"{seq}: triggers rca {counts['rca']} > dcopf "
                            f"{counts['dcopf']}")
    if agg["ica"] >= agg["sced"]:
        problems.append(f"aggregate ica {agg['ica']} !< sced {agg['sced']}")
    if agg["rca"] >= agg["dcopf"]:
        problems.append(f"aggregate rca {agg['rca']} !< dcopf {agg['dcopf']}")
    if elapsed >= 900.0:
        problems.append(f"runtime {elapsed:.0f}s over budget")
    report("C6 methodology efficacy over generated scenarios", not problems,
           f"{len(scenarios)} scenarios, triggers {agg}, {elapsed:.0f}s"
           + ("; " + "; ".join(problems[:4]) if problems else ""))


def test_c8_speed_ordering(methodology_results):
    scenarios, results, _ = methodology_results
    walls = {m: [] for m in ("ica", "rca", "dcopf")}
    for (seq, mode), res in results.items():
        if mode in walls:
            walls[mode].extend(res["solve_walls"])
    med = {m: float(np.median(v)) for m, v in walls.items()}
    ok = med["rca"] < med["ica"] and med["rca"] <= 3.0 * med["dcopf"]
    report("C8 solve-speed ordering", ok,
           f"median ica {med['ica']:.3f}s, rca {med['rca']:.3f}s, "
           f"dcopf {med['dcopf']:.3f}s")


# -- criterion 7: constraint-count claims --------------------------------------

def test_c7_constraint_counts():
    from gridcut import apply_outage
    net = load_case(os.path.join(DATA, "case118.json"))
    net = apply_outage(net, "15-33")
    flows, ptdf, lodf, violations, screening = _staged(net)
    assert len(violations.e_v) >= 3, "need a scenario with |E_v| >= 3"
    n_live = len(net.in_service_ids())
    prob_i = build_problem("ica", net, flows, ptdf, lodf,
                           violations=violations, cutsets=screening)
    prob_r = build_problem("rca", net, flows, ptdf, lodf,
                           violations=violations, cutsets=screening)
    ok = (prob_i.eq_post_contingency_pairs == len(violations.e_v) * n_live
          and prob_r.eq_cut_rows == len(screening.special_assets)
          and len(screening.special_assets) >= 1)
    report("C7 constraint-count claims", ok,
           f"|E_v|={len(violations.e_v)}, |E|={n_live}, post-contingency "
           f"pairs={prob_i.eq_post_contingency_pairs}, cut rows="
           f"{prob_r.eq_cut_rows}=|E_s|={len(screening.special_assets)}")
