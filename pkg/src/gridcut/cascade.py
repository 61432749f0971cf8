"""Quasi-static DC cascading-failure simulation.

Each round removes the branches tripped in the previous round, rebalances
every island, solves a DC flow per island and trips all branches loaded
above rating, until nothing more trips.  Rebalancing is deterministic:
generators scale proportionally toward island demand within their limits;
a capacity shortfall sheds island load pro rata; a minimum-generation
surplus trips generators in ascending id order until the rest fits.

The per-round flow solve treats all islands at once: the reduced nodal
susceptance system is block diagonal with one reference bus per island.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .errors import BranchStateError
from .model import Network

TRIP_TOL = 1e-9        # float guard on the "strictly above rating" trip rule
UNSERVED_TOL = 1e-3    # MW of unserved demand that counts as a trigger


@dataclass(frozen=True)
class CascadeRound:
    tripped: frozenset          # branches removed entering this round
    island_sheds: tuple         # MW shed per island this round
    n_islands: int


@dataclass(frozen=True)
class CascadeResult:
    initiating: int
    rounds: tuple               # CascadeRound, oldest first; never empty
    final_unserved: float       # MW of demand lost over the whole cascade
    is_trigger: bool            # unserved demand or any dependent trip

    @property
    def dependent_trips(self) -> frozenset:
        out = set()
        for rnd in self.rounds[1:]:
            out |= rnd.tripped
        return frozenset(out)

    def to_dict(self, net: Network) -> dict:
        return {
            "initiating": net.branches[self.initiating].name,
            "rounds": [
                {"tripped": sorted(net.branches[b].name for b in r.tripped),
                 "island_sheds_mw": [round(s, 6) for s in r.island_sheds],
                 "n_islands": r.n_islands}
                for r in self.rounds],
            "final_unserved_mw": round(self.final_unserved, 6),
            "is_trigger": self.is_trigger,
        }


def _components(n, branch_from, branch_to, live_mask):
    """Component label per bus; labels ascend with the lowest bus id inside."""
    idx = np.flatnonzero(live_mask)
    graph = scipy.sparse.coo_matrix(
        (np.ones(len(idx)), (branch_from[idx], branch_to[idx])), shape=(n, n))
    ncomp, labels = scipy.sparse.csgraph.connected_components(graph, directed=False)
    return labels, ncomp


def _rebalance_island(gen_p, gen_on, load_p, gen_min, gen_max):
    """Mutates the island's generator/load arrays; returns MW of load shed.

    Proportional scaling with limit clipping; exact balance is restored on
    the unclipped generators each pass.  No-op when already balanced.
    """
    shed = 0.0
    demand = float(np.sum(load_p))
    online = gen_on.copy()
    total = float(np.sum(gen_p[online])) if online.any() else 0.0
    if abs(total - demand) <= 1e-6:
        return 0.0
    cap_max = float(np.sum(gen_max[online])) if online.any() else 0.0
    if cap_max < demand - 1e-9:
        # not enough capacity: everything to max, shed the rest pro rata
        gen_p[online] = gen_max[online]
        deficit = demand - cap_max
        if demand > 0:
            load_p *= (demand - deficit) / demand
        return deficit
    # trip generators (ascending id) while even minimum output overshoots
    while online.any() and float(np.sum(gen_min[online])) > demand + 1e-9:
        first = int(np.flatnonzero(online)[0])
        online[first] = False
        gen_p[first] = 0.0
    gen_on[:] = online
    if not online.any():
        if demand > 1e-9:
            shed = demand
            load_p[:] = 0.0
        return shed
    # proportional move toward demand, clipping at limits
    for _ in range(64):
        total = float(np.sum(gen_p[online]))
        gap = demand - total
        if abs(gap) <= 1e-9:
            break
        if gap > 0:
            room = gen_max - gen_p
        else:
            room = gen_p - gen_min
        room[~online] = 0.0
        free = float(np.sum(room[online]))
        if free <= 1e-12:
            break
        frac = min(1.0, abs(gap) / free)
        gen_p[online] += np.sign(gap) * frac * room[online]
        np.clip(gen_p, gen_min, gen_max, out=gen_p)
        gen_p[~online] = 0.0
    total = float(np.sum(gen_p[online]))
    if total < demand - 1e-6:
        deficit = demand - total
        load_p *= (demand - deficit) / demand
        return deficit
    return shed


def _full_susceptance(net, live) -> np.ndarray:
    n = net.n_buses
    idx = np.flatnonzero(live)
    f = net.branch_from[idx]
    t = net.branch_to[idx]
    b = net.branch_susceptance[idx]
    b_mat = np.zeros((n, n))
    np.add.at(b_mat, (f, f), b)
    np.add.at(b_mat, (t, t), b)
    np.subtract.at(b_mat, (f, t), b)
    np.subtract.at(b_mat, (t, f), b)
    return b_mat


def _remove_branch_from_susceptance(b_mat, net, l) -> None:
    f, t = int(net.branch_from[l]), int(net.branch_to[l])
    b = float(net.branch_susceptance[l])
    b_mat[f, f] -= b
    b_mat[t, t] -= b
    b_mat[f, t] += b
    b_mat[t, f] += b


def _all_island_flows(net, live, inj, comp, b_mat):
    """One DC solve covering every island; returns per-branch flows.

    ``b_mat`` is the nodal susceptance matrix of the live branches; the
    reduced system is block diagonal with one reference (the lowest bus id)
    per island.
    """
    n = net.n_buses
    idx = np.flatnonzero(live)
    flows = np.zeros(len(net.branches))
    if not len(idx):
        return flows
    _, ref_idx = np.unique(comp, return_index=True)
    keep = np.ones(n, dtype=bool)
    keep[ref_idx] = False
    kept = np.flatnonzero(keep)
    theta = np.zeros(n)
    if len(kept):
        theta[kept] = np.linalg.solve(b_mat[np.ix_(kept, kept)],
                                      inj[kept] / net.mva_base)
    f = net.branch_from[idx]
    t = net.branch_to[idx]
    flows[idx] = net.branch_susceptance[idx] * (theta[f] - theta[t]) * net.mva_base
    return flows


def simulate_cascade(net: Network, initiating_branch) -> CascadeResult:
    """Propagate the outage of one branch to quiescence."""
    start = net.branch_index(initiating_branch)
    if not net.branches[start].in_service:
        raise BranchStateError(f"branch {net.branches[start].name} is not in service")

    live = net.branch_in_service.copy()
    gen_p = np.array([g.p for g in net.generators])
    gen_min = np.array([g.p_min for g in net.generators])
    gen_max = np.array([g.p_max for g in net.generators])
    gen_on = np.ones(len(gen_p), dtype=bool)
    gen_bus = np.array([g.bus for g in net.generators], dtype=np.int64)
    load_p = np.array([ld.p for ld in net.loads])
    load_bus = np.array([ld.bus for ld in net.loads], dtype=np.int64)
    demand0 = float(np.sum(load_p))

    rounds = []
    b_mat = _full_susceptance(net, live)
    to_trip = {start}
    while to_trip:
        tripped_now = frozenset(to_trip)
        for l in tripped_now:
            live[l] = False
            _remove_branch_from_susceptance(b_mat, net, l)
        comp, n_comp = _components(net.n_buses, net.branch_from, net.branch_to, live)
        gen_comp = comp[gen_bus]
        load_comp = comp[load_bus]
        sheds = []
        for c in range(n_comp):
            g_sel = np.flatnonzero(gen_comp == c)
            l_sel = np.flatnonzero(load_comp == c)
            if not len(g_sel) and not len(l_sel):
                sheds.append(0.0)
                continue
            gp = gen_p[g_sel]
            go = gen_on[g_sel]
            lp = load_p[l_sel]
            shed = _rebalance_island(gp, go, lp, gen_min[g_sel], gen_max[g_sel])
            gen_p[g_sel] = gp
            gen_on[g_sel] = go
            load_p[l_sel] = lp
            sheds.append(float(shed))
        rounds.append(CascadeRound(tripped=tripped_now,
                                   island_sheds=tuple(sheds), n_islands=n_comp))
        inj = np.zeros(net.n_buses)
        np.add.at(inj, gen_bus, np.where(gen_on, gen_p, 0.0))
        np.subtract.at(inj, load_bus, load_p)
        flows = _all_island_flows(net, live, inj, comp, b_mat)
        over = live & (np.abs(flows) > net.branch_rating + TRIP_TOL)
        to_trip = set(int(l) for l in np.flatnonzero(over))

    unserved = demand0 - float(np.sum(load_p))
    is_trigger = unserved > UNSERVED_TOL or len(rounds) > 1
    return CascadeResult(initiating=start, rounds=tuple(rounds),
                         final_unserved=float(unserved), is_trigger=is_trigger)


def find_cascade_triggers(net: Network, contingencies=None, fast: bool = True,
                          flows=None, lodf=None) -> frozenset:
    """Contingencies whose cascade produces dependent trips or unserved load.

    With ``fast`` the non-islanding contingencies whose exact post-outage
    flow estimates show no overload are skipped: their simulation is a
    single round with nothing tripped and nothing shed, hence never a
    trigger.  Results are identical either way.  ``flows``/``lodf`` allow a
    caller that already holds the base solution to skip recomputing it.
    """
    if contingencies is None:
        ids = net.in_service_ids()
    else:
        ids = sorted(net.branch_index(c) for c in contingencies)
    candidates = list(ids)
    triggers = set()
    if fast and candidates:
        try:
            from .sensitivity import compute_lodf, compute_ptdf, dc_power_flow
            if flows is None:
                flows = dc_power_flow(net, net.injections())
            base_ok = bool(np.all(np.abs(flows) <= net.branch_rating + TRIP_TOL))
            if base_ok:
                if lodf is None:
                    lodf = compute_lodf(net, compute_ptdf(net))
                live = net.branch_in_service
                remaining = []
                for k in candidates:
                    if k in lodf.undefined_outages:
                        remaining.append(k)
                        continue
                    fc = flows + lodf.matrix[:, k] * flows[k]
                    fc[k] = 0.0
                    if np.any(live & (np.abs(fc) > net.branch_rating + TRIP_TOL)):
                        remaining.append(k)
                candidates = remaining
        except Exception:
            pass  # screening is an optimization only; fall back to full runs
    for k in candidates:
        if simulate_cascade(net, k).is_trigger:
            triggers.add(k)
    return frozenset(triggers)
