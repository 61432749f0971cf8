"""Generate the shipped 118-bus study case (src/gridcut/data/case118.json).

Topology: the standard 118-bus test network (186 branches including the
nine double circuits, 54 generator buses).  The electrical data that public
copies of the case do not carry consistently - branch ratings, generator
economics, per-bus demand - is synthesized here with a fixed seed so the
dataset is fully documented and reproducible:

  * demand: seeded 18-55 MW at every bus of the 2-edge-connected core
    (buses hanging behind bridges get no injection at all: a loaded
    bridge can never survive the cut-set check), scaled to a 4200 MW
    system total; shed costs 9500-10500 $/MW per load (identical costs
    would make every shed split equally optimal and stall the dispatch
    solver on a massively degenerate face)
  * generation: output proportional to capacity, balanced against demand;
    capacities seeded 80-400 MW; quadratic cost curves with seeded
    coefficients
  * susceptances: seeded reactances of 0.03-0.15 pu
  * ratings: equipment-class style - the smallest class from
    {40, 60, 80, 120, 160, 200, 250, 300, 400, 500, 650} MW covering
    1.35x the base-case DC flow - then repaired for N-1 cut security:
    while any single outage would saturate a cut-set, the surviving
    members of that cut are bumped one rating class

Leaf buses carry no injection and the rating repair leaves the intact
system free of special assets, so stressed corridors only emerge after
multiple outages.

Run:  python tools/make_case118.py
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

EDGES = [
    (1, 2), (1, 3), (4, 5), (3, 5), (5, 6), (6, 7), (8, 9), (8, 5), (9, 10),
    (4, 11), (5, 11), (11, 12), (2, 12), (3, 12), (7, 12), (11, 13), (12, 14),
    (13, 15), (14, 15), (12, 16), (15, 17), (16, 17), (17, 18), (18, 19),
    (19, 20), (15, 19), (20, 21), (21, 22), (22, 23), (23, 24), (23, 25),
    (26, 25), (25, 27), (27, 28), (28, 29), (30, 17), (8, 30), (26, 30),
    (17, 31), (29, 31), (23, 32), (31, 32), (27, 32), (15, 33), (19, 34),
    (35, 36), (35, 37), (33, 37), (34, 36), (34, 37), (38, 37), (37, 39),
    (37, 40), (30, 38), (39, 40), (40, 41), (40, 42), (41, 42), (43, 44),
    (34, 43), (44, 45), (45, 46), (46, 47), (46, 48), (47, 49), (42, 49),
    (42, 49), (45, 49), (48, 49), (49, 50), (49, 51), (51, 52), (52, 53),
    (53, 54), (49, 54), (49, 54), (54, 55), (54, 56), (55, 56), (56, 57),
    (50, 57), (56, 58), (51, 58), (54, 59), (56, 59), (56, 59), (55, 59),
    (59, 60), (59, 61), (60, 61), (60, 62), (61, 62), (63, 59), (63, 64),
    (64, 61), (38, 65), (64, 65), (49, 66), (49, 66), (62, 66), (62, 67),
    (65, 66), (66, 67), (65, 68), (47, 69), (49, 69), (68, 69), (69, 70),
    (24, 70), (70, 71), (24, 72), (71, 72), (71, 73), (70, 74), (70, 75),
    (69, 75), (74, 75), (76, 77), (69, 77), (75, 77), (77, 78), (78, 79),
    (77, 80), (77, 80), (79, 80), (68, 81), (81, 80), (77, 82), (82, 83),
    (83, 84), (83, 85), (84, 85), (85, 86), (86, 87), (85, 88), (85, 89),
    (88, 89), (89, 90), (89, 90), (90, 91), (89, 92), (89, 92), (91, 92),
    (92, 93), (92, 94), (93, 94), (94, 95), (80, 96), (82, 96), (94, 96),
    (80, 97), (80, 98), (80, 99), (92, 100), (94, 100), (95, 96), (96, 97),
    (98, 100), (99, 100), (100, 101), (92, 102), (101, 102), (100, 103),
    (100, 104), (103, 104), (103, 105), (100, 106), (104, 105), (105, 106),
    (105, 107), (105, 108), (106, 107), (108, 109), (103, 110), (109, 110),
    (110, 111), (110, 112), (17, 113), (32, 113), (32, 114), (27, 115),
    (114, 115), (68, 116), (12, 117), (75, 118), (76, 118),
]

GEN_BUSES = [1, 4, 6, 8, 10, 12, 15, 18, 19, 24, 25, 26, 27, 31, 32, 34, 36,
             40, 42, 46, 49, 54, 55, 56, 59, 61, 62, 65, 66, 69, 70, 72, 73,
             74, 76, 77, 80, 85, 87, 89, 90, 91, 92, 99, 100, 103, 104, 105,
             107, 110, 111, 112, 113, 116]

RATING_CLASSES = [40, 60, 80, 120, 160, 200, 250, 300, 400, 500, 650]
TOTAL_DEMAND = 4200.0
SEED = 118


def _giant_bridgeless_component(n: int, edges) -> set:
    """Buses of the largest component after removing all bridge branches."""
    parallel: dict = {}
    for a, b in edges:
        key = (min(a, b), max(a, b))
        parallel[key] = parallel.get(key, 0) + 1
    adj = {b: [] for b in range(1, n + 1)}
    for i, (a, b) in enumerate(edges):
        adj[a].append((b, i))
        adj[b].append((a, i))
    disc = {}
    low = {}
    bridge_ids = set()
    timer = [0]

    def dfs(root):
        stack = [(root, -1, iter(adj[root]))]
        disc[root] = low[root] = timer[0]
        timer[0] += 1
        while stack:
            u, pedge, it = stack[-1]
            moved = False
            for v, eid in it:
                if eid == pedge:
                    continue
                if v not in disc:
                    disc[v] = low[v] = timer[0]
                    timer[0] += 1
                    stack.append((v, eid, iter(adj[v])))
                    moved = True
                    break
                low[u] = min(low[u], disc[v])
            if not moved:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        key = (min(p, u), max(p, u))
                        if parallel[key] == 1:
                            bridge_ids.add(pedge)

    for b in range(1, n + 1):
        if b not in disc:
            dfs(b)
    comp_adj = {b: [] for b in range(1, n + 1)}
    for i, (a, b) in enumerate(edges):
        if i not in bridge_ids:
            comp_adj[a].append(b)
            comp_adj[b].append(a)
    seen = set()
    best: set = set()
    for s in range(1, n + 1):
        if s in seen:
            continue
        comp = {s}
        seen.add(s)
        stack = [s]
        while stack:
            u = stack.pop()
            for v in comp_adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.add(v)
                    stack.append(v)
        if len(comp) > len(best):
            best = comp
    return best


def build() -> dict:
    rng = np.random.default_rng(SEED)
    n = 118

    # 2-edge-connected core: drop bridges, keep the giant component
    adj = {b: set() for b in range(1, n + 1)}
    pair_count: dict = {}
    for a, b in EDGES:
        key = (min(a, b), max(a, b))
        pair_count[key] = pair_count.get(key, 0) + 1
        adj[a].add(b)
        adj[b].add(a)
    core = _giant_bridgeless_component(n, EDGES)

    x = rng.uniform(0.03, 0.15, size=len(EDGES))
    gen_set = set(GEN_BUSES)
    active_gen_buses = [b for b in GEN_BUSES if b in core]

    load_buses = [b for b in range(1, n + 1)
                  if b in core and (b not in gen_set or rng.random() < 0.35)]
    raw = rng.uniform(18.0, 55.0, size=len(load_buses))
    raw *= TOTAL_DEMAND / raw.sum()
    shed_costs = np.round(rng.uniform(9500.0, 10500.0, size=len(load_buses)), 2)
    loads = [{"bus": b, "p": round(float(p), 3), "shed_cost": float(c)}
             for b, p, c in zip(load_buses, raw, shed_costs)]

    cap = rng.uniform(80.0, 400.0, size=len(active_gen_buses))
    out = cap * (TOTAL_DEMAND / cap.sum())
    cost_b = rng.uniform(15.0, 45.0, size=len(active_gen_buses))
    cost_c = rng.uniform(0.01, 0.06, size=len(active_gen_buses))
    gens = []
    for i, b in enumerate(active_gen_buses):
        p_max = round(float(max(cap[i], out[i] * 1.25)), 3)
        gens.append({"bus": b, "p": round(float(out[i]), 6), "p_min": 0.0,
                     "p_max": p_max,
                     "cost": [0.0, round(float(cost_b[i]), 4),
                              round(float(cost_c[i]), 5)]})
    total_out = sum(g["p"] for g in gens)
    gens[0]["p"] = round(gens[0]["p"] + TOTAL_DEMAND - total_out, 6)

    doc = {
        "mva_base": 100.0,
        "reference_bus": 69,
        "buses": [{"id": b} for b in range(1, n + 1)],
        "branches": [
            {"from": a, "to": b, "susceptance": round(float(1.0 / x[i]), 4),
             "rating": 9999.0}
            for i, (a, b) in enumerate(EDGES)],
        "generators": gens,
        "loads": loads,
    }

    from gridcut import build_flow_state, dc_power_flow, parse_case, screen_all
    net = parse_case(json.dumps(doc))
    flows = dc_power_flow(net, net.injections())
    for i, row in enumerate(doc["branches"]):
        need = max(1.35 * abs(float(flows[i])), 35.0)
        row["rating"] = float(min(c for c in RATING_CLASSES if c >= need)
                              if need <= RATING_CLASSES[-1] else
                              float(np.ceil(need / 50.0) * 50.0))

    def bump(rating: float) -> float:
        for c in RATING_CLASSES:
            if c > rating:
                return float(c)
        return float(rating + 100.0)

    for _ in range(60):
        net = parse_case(json.dumps(doc))
        specials = screen_all(build_flow_state(net)).special_assets
        if not specials:
            break
        for b, res in specials.items():
            survivors = sorted(res.k_crit - {b})
            if not survivors:
                raise RuntimeError(f"branch {b} is a loaded bridge; injections "
                                   "behind bridges must be zero")
            for l in survivors:
                doc["branches"][l]["rating"] = bump(doc["branches"][l]["rating"])
    else:
        raise RuntimeError("rating repair did not converge")

    net = parse_case(json.dumps(doc))
    flows = dc_power_flow(net, net.injections())
    assert np.all(np.abs(flows) <= np.array([r["rating"] for r in doc["branches"]])), \
        "base flows must respect ratings"
    assert not screen_all(build_flow_state(net)).special_assets
    return doc


def main() -> None:
    doc = build()
    path = os.path.join(os.path.dirname(__file__), "..",
                        "src", "gridcut", "data", "case118.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    print(f"wrote {os.path.normpath(path)}: {len(doc['branches'])} branches, "
          f"{len(doc['generators'])} generators, {len(doc['loads'])} loads")


if __name__ == "__main__":
    main()
