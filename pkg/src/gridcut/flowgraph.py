"""Flow graph and latent-capacity graph maintenance.

The flow graph assigns every in-service branch a signed MW flow; the latent
capacity graph is its pair of directional residuals

    c_fwd = rating - flow        (room left in the from->to direction)
    c_rev = rating + flow        (room left in the to->from direction)

Feasible flows are built with a shortest-augmenting-path max-flow from a
virtual super-source (arcs into each generator bus, capacity = output) to a
virtual super-sink (arcs out of each load bus, capacity = demand).  Outages
and injection changes are absorbed incrementally by rerouting over shortest
unsaturated paths instead of rebuilding from scratch.

All searches break ties by ascending bus id then ascending branch id, so
every operation is deterministic and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (BranchStateError, InfeasibleFlowError,
                     InfeasibleRedispatchError, IslandedNetworkError)
from .model import Network, apply_outage, connected_components

RESIDUAL_FLOOR = 1e-9   # below this a direction counts as saturated
BALANCE_TOL = 1e-6


@dataclass(eq=False)
class Adjacency:
    """CSR incidence over directed arc entries, sorted per bus by
    (neighbour id, arc id)."""
    n: int
    start: np.ndarray    # int32 [n+1]
    arc: np.ndarray      # int32 [2a]
    other: np.ndarray    # int32 [2a]
    fwd: np.ndarray      # uint8 [2a]
    src: np.ndarray      # int32 [2a]  bus owning the entry


def build_adjacency(n: int, arc_from: np.ndarray, arc_to: np.ndarray) -> Adjacency:
    a = len(arc_from)
    owner = np.concatenate([arc_from, arc_to]).astype(np.int64)
    other = np.concatenate([arc_to, arc_from]).astype(np.int64)
    arc = np.concatenate([np.arange(a), np.arange(a)]).astype(np.int64)
    fwd = np.concatenate([np.ones(a, dtype=np.uint8), np.zeros(a, dtype=np.uint8)])
    order = np.lexsort((arc, other, owner))
    owner, other, arc, fwd = owner[order], other[order], arc[order], fwd[order]
    start = np.zeros(n + 1, dtype=np.int32)
    np.add.at(start, owner + 1, 1)
    np.cumsum(start, out=start)
    return Adjacency(n=n, start=start.astype(np.int32),
                     arc=arc.astype(np.int32), other=other.astype(np.int32),
                     fwd=fwd, src=owner.astype(np.int32))


def _service_adjacency(net: Network) -> tuple[Adjacency, np.ndarray]:
    """Adjacency over in-service branches, cached on the snapshot.

    Arc indices are global branch ids; out-of-service branches simply have
    no entries (their capacities are forced to zero anyway).
    """
    cached = net.__dict__.get("_flowgraph_adjacency")
    if cached is None:
        ids = np.flatnonzero(net.branch_in_service)
        owner = net.branch_from[ids]
        other = net.branch_to[ids]
        a = len(ids)
        all_owner = np.concatenate([owner, other]).astype(np.int64)
        all_other = np.concatenate([other, owner]).astype(np.int64)
        arc = np.concatenate([ids, ids]).astype(np.int64)
        fwd = np.concatenate([np.ones(a, dtype=np.uint8), np.zeros(a, dtype=np.uint8)])
        order = np.lexsort((arc, all_other, all_owner))
        start = np.zeros(net.n_buses + 1, dtype=np.int32)
        np.add.at(start, all_owner[order] + 1, 1)
        np.cumsum(start, out=start)
        adj = Adjacency(n=net.n_buses, start=start.astype(np.int32),
                        arc=arc[order].astype(np.int32),
                        other=all_other[order].astype(np.int32),
                        fwd=fwd[order], src=all_owner[order].astype(np.int32))
        cached = (adj, ids)
        net.__dict__["_flowgraph_adjacency"] = cached
    return cached


@dataclass(frozen=True)
class InjectionDelta:
    """Balanced set of bus-level injection changes (all amounts positive MW)."""
    increases: tuple[tuple[int, float], ...]   # (bus, +MW), ascending bus id
    decreases: tuple[tuple[int, float], ...]   # (bus, +MW of decrease)

    def __post_init__(self):
        for bus, amt in self.increases + self.decreases:
            if amt <= 0:
                raise ValueError(f"delta amounts must be positive (bus {bus})")
        up = sum(a for _, a in self.increases)
        dn = sum(a for _, a in self.decreases)
        if abs(up - dn) > BALANCE_TOL:
            raise ValueError(f"unbalanced injection delta: +{up} / -{dn} MW")

    @property
    def empty(self) -> bool:
        return not self.increases and not self.decreases

    def vector(self, n: int) -> np.ndarray:
        v = np.zeros(n)
        for bus, amt in self.increases:
            v[bus] += amt
        for bus, amt in self.decreases:
            v[bus] -= amt
        return v

    @staticmethod
    def from_vector(delta: np.ndarray, tol: float = BALANCE_TOL) -> "InjectionDelta":
        inc = tuple((int(i), float(delta[i])) for i in np.flatnonzero(delta > tol))
        dec = tuple((int(i), float(-delta[i])) for i in np.flatnonzero(delta < -tol))
        return InjectionDelta(increases=inc, decreases=dec)


@dataclass(frozen=True)
class AugmentingPath:
    branches: tuple[int, ...]
    directions: tuple[int, ...]   # +1 traverses from->to, -1 the reverse
    bottleneck: float


class FlowState:
    """Immutable per-branch signed flows plus derived latent capacities.

    ``injections`` records the bus injections this flow serves; it defaults
    to the snapshot's own gen/load balance and diverges from it only
    transiently, between computing a redispatch update and rebinding the
    state to the post-dispatch snapshot (:meth:`with_network`).
    """

    def __init__(self, net: Network, flows: np.ndarray,
                 injections: np.ndarray | None = None):
        self.net = net
        self.flows = np.asarray(flows, dtype=float).copy()
        self.flows.setflags(write=False)
        self.injections = (net.injections() if injections is None
                           else np.asarray(injections, dtype=float).copy())
        self.injections.setflags(write=False)
        self._validate()

    def _validate(self) -> None:
        net = self.net
        live = net.branch_in_service
        if np.any(np.abs(self.flows[~live]) > 0):
            raise ValueError("out-of-service branches must carry zero flow")
        over = np.abs(self.flows[live]) - net.branch_rating[live]
        if np.any(over > BALANCE_TOL):
            worst = int(np.flatnonzero(live)[int(np.argmax(over))])
            raise ValueError(f"flow exceeds rating on branch {net.branches[worst].name}")
        residual = self.injections.copy()
        np.subtract.at(residual, net.branch_from, self.flows)
        np.add.at(residual, net.branch_to, self.flows)
        if np.max(np.abs(residual)) > BALANCE_TOL:
            raise ValueError(f"nodal balance violated by "
                             f"{np.max(np.abs(residual)):.3e} MW")

    def latent(self) -> tuple[np.ndarray, np.ndarray]:
        """Fresh (c_fwd, c_rev) arrays; zero for out-of-service branches."""
        live = self.net.branch_in_service
        cap_fwd = np.where(live, self.net.branch_rating - self.flows, 0.0)
        cap_rev = np.where(live, self.net.branch_rating + self.flows, 0.0)
        return cap_fwd, cap_rev

    def with_network(self, net: Network) -> "FlowState":
        """Rebind to a snapshot whose own injections match this state."""
        if np.max(np.abs(net.injections() - self.injections)) > 1e-4:
            raise ValueError("snapshot injections do not match this flow state")
        return FlowState(net, self.flows, net.injections())


# -- construction -----------------------------------------------------------


def build_flow_state(net: Network, inj: np.ndarray | None = None) -> FlowState:
    """Construct a rating-respecting feasible flow for the given injections.

    Raises :class:`InfeasibleFlowError` carrying the certifying saturated cut
    when total demand cannot be routed.  The result is one valid flow, not
    the DC power flow; any valid flow supports cut-set screening.
    """
    if len(connected_components(net)) != 1:
        raise IslandedNetworkError("in-service subgraph is not connected")
    n, m = net.n_buses, len(net.branches)
    if inj is None:
        sources: dict[int, float] = {}
        sinks: dict[int, float] = {}
        for g in net.generators:
            if g.p > 0:
                sources[g.bus] = sources.get(g.bus, 0.0) + g.p
        for ld in net.loads:
            if ld.p > 0:
                sinks[ld.bus] = sinks.get(ld.bus, 0.0) + ld.p
        injections = net.injections()
    else:
        injections = np.asarray(inj, dtype=float)
        if abs(float(np.sum(injections))) > BALANCE_TOL:
            raise ValueError("injection vector does not sum to zero")
        sources = {int(i): float(injections[i])
                   for i in np.flatnonzero(injections > 0)}
        sinks = {int(i): float(-injections[i])
                 for i in np.flatnonzero(injections < 0)}
    demand = sum(sinks.values())

    src_buses = sorted(sources)
    snk_buses = sorted(sinks)
    live = np.flatnonzero(net.branch_in_service)
    n_nodes = n + 2
    s_node, t_node = n, n + 1
    arc_from = np.concatenate([
        net.branch_from[live],
        np.full(len(src_buses), s_node, dtype=np.int32),
        np.array(snk_buses, dtype=np.int32) if snk_buses else np.empty(0, np.int32),
    ]).astype(np.int32)
    arc_to = np.concatenate([
        net.branch_to[live],
        np.array(src_buses, dtype=np.int32) if src_buses else np.empty(0, np.int32),
        np.full(len(snk_buses), t_node, dtype=np.int32),
    ]).astype(np.int32)
    adj = build_adjacency(n_nodes, arc_from, arc_to)

    n_arcs = len(arc_from)
    cap_fwd = np.empty(n_arcs)
    cap_rev = np.empty(n_arcs)
    cap_fwd[:len(live)] = net.branch_rating[live]
    cap_rev[:len(live)] = net.branch_rating[live]
    cap_fwd[len(live):len(live) + len(src_buses)] = [sources[b] for b in src_buses]
    cap_fwd[len(live) + len(src_buses):] = [sinks[b] for b in snk_buses]
    cap_rev[len(live):] = 0.0

    delta = np.zeros(n_arcs)
    value = _kernels.max_flow(n_nodes, adj.start, adj.arc, adj.other, adj.fwd,
                              adj.src, cap_fwd, cap_rev, s_node, t_node,
                              demand, RESIDUAL_FLOOR, delta)
    if demand - value > BALANCE_TOL:
        mask = _kernels.reachable(n_nodes, adj.start, adj.arc, adj.other, adj.fwd,
                                  cap_fwd, cap_rev, s_node, RESIDUAL_FLOOR)
        cut = frozenset(
            int(live[i]) for i in range(len(live))
            if mask[arc_from[i]] != mask[arc_to[i]])
        side = frozenset(int(b) for b in range(n) if mask[b])
        raise InfeasibleFlowError("demand is not routable under branch ratings",
                                  cut, side, float(value - demand))
    flows = np.zeros(m)
    flows[live] = delta[:len(live)]
    return FlowState(net, flows, injections)


def flow_state_from_flows(net: Network, flows: np.ndarray) -> FlowState:
    """Wrap externally computed branch flows (e.g. a DC solution)."""
    return FlowState(net, flows)


# -- cut metrics ------------------------------------------------------------


def cut_transfer(fs: FlowState, partition) -> tuple[float, float]:
    """(F, R) across the bipartition: net MW crossing out of ``partition``
    and the sum of crossing ratings.  The cut is saturated iff F > R."""
    side = np.zeros(fs.net.n_buses, dtype=bool)
    side[list(partition)] = True
    if side.all() or not side.any():
        raise ValueError("partition must split the buses into two non-empty sides")
    live = fs.net.branch_in_service
    f_side = side[fs.net.branch_from]
    t_side = side[fs.net.branch_to]
    crossing = live & (f_side != t_side)
    sign = np.where(f_side, 1.0, -1.0)
    f_k = float(np.sum(sign[crossing] * fs.flows[crossing]))
    r_k = float(np.sum(fs.net.branch_rating[crossing]))
    return f_k, r_k


# -- path search ------------------------------------------------------------


def _trace_path(adj: Adjacency, parent_entry: np.ndarray, src: int, dst: int,
                cap_fwd: np.ndarray, cap_rev: np.ndarray):
    entries = []
    v = dst
    while v != src:
        e = int(parent_entry[v])
        entries.append(e)
        v = int(adj.src[e])
    entries.reverse()
    branches, dirs = [], []
    bottleneck = np.inf
    for e in entries:
        a = int(adj.arc[e])
        f = bool(adj.fwd[e])
        branches.append(a)
        dirs.append(1 if f else -1)
        res = cap_fwd[a] if f else cap_rev[a]
        bottleneck = min(bottleneck, float(res))
    return branches, dirs, bottleneck


def shortest_unsaturated_path(fs: FlowState, src: int, dst: int) -> AugmentingPath | None:
    """Fewest-hop path whose every step has residual capacity above the floor."""
    if src == dst:
        raise ValueError("source and destination coincide")
    adj, _ = _service_adjacency(fs.net)
    cap_fwd, cap_rev = fs.latent()
    parent = np.empty(fs.net.n_buses, dtype=np.int64)
    found = _kernels.bfs_parents(fs.net.n_buses, adj.start, adj.arc, adj.other,
                                 adj.fwd, cap_fwd, cap_rev, src, dst,
                                 RESIDUAL_FLOOR, parent)
    if not found:
        return None
    branches, dirs, bottleneck = _trace_path(adj, parent, src, dst, cap_fwd, cap_rev)
    return AugmentingPath(tuple(branches), tuple(dirs), bottleneck)


# -- incremental updates -----------------------------------------------------


def update_after_outage(fs: FlowState, branch) -> tuple[FlowState, frozenset]:
    """Remove a branch and reroute its flow over shortest unsaturated paths.

    Returns the updated state (bound to the post-outage snapshot) and the
    set of branches whose flow changed.  If the flow cannot be rerouted the
    raised :class:`InfeasibleFlowError` carries the saturated cut - this is
    exactly the condition under which the outage saturates a cut-set.
    """
    net = fs.net
    idx = net.branch_index(branch)
    if not net.branches[idx].in_service:
        raise BranchStateError(f"branch {net.branches[idx].name} is not in service")
    new_net = apply_outage(net, idx)
    f = float(fs.flows[idx])
    new_flows = fs.flows.copy()
    new_flows[idx] = 0.0
    if abs(f) <= RESIDUAL_FLOOR:
        return FlowState(new_net, new_flows, fs.injections), frozenset()

    tail, head = ((net.branches[idx].from_bus, net.branches[idx].to_bus)
                  if f > 0 else (net.branches[idx].to_bus, net.branches[idx].from_bus))
    amount = abs(f)
    adj, _ = _service_adjacency(net)
    cap_fwd, cap_rev = fs.latent()
    cap_fwd[idx] = 0.0
    cap_rev[idx] = 0.0
    delta = np.zeros(len(net.branches))
    value = _kernels.max_flow(net.n_buses, adj.start, adj.arc, adj.other, adj.fwd,
                              adj.src, cap_fwd, cap_rev, tail, head,
                              amount, RESIDUAL_FLOOR, delta)
    if amount - value > BALANCE_TOL:
        mask = _kernels.reachable(net.n_buses, adj.start, adj.arc, adj.other,
                                  adj.fwd, cap_fwd, cap_rev, tail, RESIDUAL_FLOOR)
        crossing = frozenset(
            int(b.id) for b in net.branches
            if b.in_service and b.id != idx and mask[b.from_bus] != mask[b.to_bus])
        raise InfeasibleFlowError(
            f"outage of {net.branches[idx].name} saturates a cut-set",
            crossing, frozenset(int(b) for b in np.flatnonzero(mask)),
            float(value - amount))
    new_flows += delta
    touched = frozenset(int(i) for i in np.flatnonzero(np.abs(delta) > 0))
    return FlowState(new_net, new_flows, fs.injections), touched


def update_after_redispatch(fs: FlowState,
                            delta: InjectionDelta) -> tuple[FlowState, frozenset]:
    """Absorb an injection change by pushing flow over shortest unsaturated
    paths between raised and lowered buses.

    Sources and sinks are consumed in ascending bus-id order, moving to the
    next one only when the current amount is exhausted; when the current
    pair has no unsaturated path left, the remaining pairs are scanned in
    the same order before declaring the redispatch infeasible.
    """
    net = fs.net
    if delta.empty:
        return fs, frozenset()
    srcs = [[bus, amt] for bus, amt in sorted(delta.increases)]
    snks = [[bus, amt] for bus, amt in sorted(delta.decreases)]
    adj, _ = _service_adjacency(net)
    cap_fwd, cap_rev = fs.latent()
    flow_delta = np.zeros(len(net.branches))
    parent = np.empty(net.n_buses, dtype=np.int64)

    # absorb down to well below the balance tolerance: the updated state
    # credits the full delta to its injections, so anything left unpushed
    # shows up as nodal imbalance (per-bus dust below the residual floor is
    # unreachable by construction and stays bounded by n * floor)
    absorb_tol = max(5e-7, RESIDUAL_FLOOR * net.n_buses * 2)
    while True:
        remaining = sum(a for _, a in srcs)
        if remaining <= absorb_tol:
            break
        pushed = False
        for s in srcs:
            if s[1] <= RESIDUAL_FLOOR:
                continue
            for t in snks:
                if t[1] <= RESIDUAL_FLOOR:
                    continue
                found = _kernels.bfs_parents(
                    net.n_buses, adj.start, adj.arc, adj.other, adj.fwd,
                    cap_fwd, cap_rev, s[0], t[0], RESIDUAL_FLOOR, parent)
                if not found:
                    continue
                branches, dirs, bottleneck = _trace_path(
                    adj, parent, s[0], t[0], cap_fwd, cap_rev)
                push = min(s[1], t[1], bottleneck)
                for b, d in zip(branches, dirs):
                    if d > 0:
                        cap_fwd[b] -= push
                        cap_rev[b] += push
                        flow_delta[b] += push
                    else:
                        cap_rev[b] -= push
                        cap_fwd[b] += push
                        flow_delta[b] -= push
                s[1] -= push
                t[1] -= push
                pushed = True
                break
            if pushed:
                break
        if not pushed:
            raise InfeasibleRedispatchError(
                f"injection delta not absorbable; {remaining:.6f} MW stranded")

    touched = frozenset(int(i) for i in np.flatnonzero(np.abs(flow_delta) > 0))
    new_inj = fs.injections + delta.vector(net.n_buses)
    return FlowState(net, fs.flows + flow_delta, new_inj), touched
