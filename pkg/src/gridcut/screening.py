"""Cut-set saturation screening.

``feasibility_test`` decides whether the outage of a branch would saturate a
cut-set: it measures, with a bounded max-flow over the latent-capacity
graph, how much of the branch's flow the indirect paths between its
endpoints can absorb.  When they cannot absorb all of it, the residual
min-cut is the limiting critical cut-set and the shortfall is the (negative)
transfer margin.

``brute_force_cutset_oracle`` is the independent check: it enumerates bus
bipartitions outright and compares required transfer against surviving
ratings.  The two agree because a bounded max-flow equals the minimum over
all endpoint-splitting bipartitions of (surviving rating sum - injection
transfer); enumerating every subset, connected sides or not, cannot dip
below that minimum.

The shortlisting helpers decide which branches must be re-tested after an
incremental flow update.  A branch whose stored witness set (the branches
its rerouting flow used, plus itself) is disjoint from everything the
update touched keeps its verdict: its own flow and the capacities its
witness relies on are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BranchStateError
from .flowgraph import RESIDUAL_FLOOR, FlowState, _service_adjacency
from .model import Network

SATURATION_TOL = 1e-6
MAX_ORACLE_BUSES = 20


@dataclass(frozen=True)
class FTResult:
    """Verdict for one branch.

    ``indirect_capacity`` is the flow the indirect paths were shown to carry;
    the search stops once the branch's own flow is matched, so for
    non-special branches it equals that flow.  ``witness`` is the branch
    itself plus every branch its rerouting flow used. ``k_crit``, ``t_m`` and
    ``source_side`` are present only for special branches (the oracle leaves
    ``indirect_capacity``/``witness`` unset since they are flow-solution
    specific while the verdict is not).
    """
    branch: int
    is_special: bool
    indirect_capacity: float | None = None
    t_m: float | None = None
    k_crit: frozenset | None = None
    source_side: frozenset | None = None
    witness: frozenset | None = None


SpecialAssetSet = dict  # branch id -> FTResult, every entry special


@dataclass(frozen=True)
class ScreeningResult:
    results: dict            # branch id -> FTResult for every candidate
    snapshot: str            # network fingerprint

    @property
    def special_assets(self) -> SpecialAssetSet:
        return {b: r for b, r in sorted(self.results.items()) if r.is_special}


def feasibility_test(fs: FlowState, branch) -> FTResult:
    """Test whether losing ``branch`` saturates a cut-set.

    The test orientation follows the sign of the branch flow; zero-flow
    branches are trivially reroutable and short-circuit to non-special.
    """
    net = fs.net
    idx = net.branch_index(branch)
    br = net.branches[idx]
    if not br.in_service:
        raise BranchStateError(f"branch {br.name} is not in service")
    f = float(fs.flows[idx])
    if abs(f) <= RESIDUAL_FLOOR:
        return FTResult(branch=idx, is_special=False, indirect_capacity=0.0,
                        witness=frozenset({idx}))
    tail, head = (br.from_bus, br.to_bus) if f > 0 else (br.to_bus, br.from_bus)
    amount = abs(f)
    adj, _ = _service_adjacency(net)
    cap_fwd, cap_rev = fs.latent()
    cap_fwd[idx] = 0.0
    cap_rev[idx] = 0.0
    delta = np.zeros(len(net.branches))
    value = _kernels.max_flow(net.n_buses, adj.start, adj.arc, adj.other, adj.fwd,
                              adj.src, cap_fwd, cap_rev, tail, head,
                              amount, RESIDUAL_FLOOR, delta)
    witness = frozenset({idx} | {int(i) for i in np.flatnonzero(np.abs(delta) > 0)})
    if value < amount - SATURATION_TOL:
        mask = _kernels.reachable(net.n_buses, adj.start, adj.arc, adj.other,
                                  adj.fwd, cap_fwd, cap_rev, tail, RESIDUAL_FLOOR)
        k_crit = frozenset(
            int(b.id) for b in net.branches
            if b.in_service and mask[b.from_bus] != mask[b.to_bus]) | {idx}
        return FTResult(branch=idx, is_special=True,
                        indirect_capacity=float(value), t_m=float(value - amount),
                        k_crit=frozenset(k_crit),
                        source_side=frozenset(int(b) for b in np.flatnonzero(mask)),
                        witness=witness)
    return FTResult(branch=idx, is_special=False, indirect_capacity=float(value),
                    witness=witness)


def brute_force_cutset_oracle(net: Network, inj: np.ndarray, branch) -> FTResult:
    """Exhaustive bipartition check, independent of any flow solution.

    For every bus subset splitting the branch endpoints, the transfer the
    subset must export (its injection sum) is compared against the ratings
    of the surviving crossing branches.  The branch is special iff some
    subset must export more than its survivors can carry; the most
    oversubscribed subset is reported, ties broken by the lexicographically
    smallest crossing branch-id tuple.
    """
    n = net.n_buses
    if n > MAX_ORACLE_BUSES:
        raise ValueError(f"oracle enumerates 2^|V| bipartitions; {n} buses is too many")
    idx = net.branch_index(branch)
    br = net.branches[idx]
    if not br.in_service:
        raise BranchStateError(f"branch {br.name} is not in service")
    inj = np.asarray(inj, dtype=float)

    masks = np.arange(1 << n, dtype=np.uint32)
    bits = ((masks[:, None] >> np.arange(n, dtype=np.uint32)) & 1).astype(bool)
    split_e = bits[:, br.from_bus] != bits[:, br.to_bus]
    bits = bits[split_e]

    live = [b for b in net.branches if b.in_service and b.id != idx]
    crossing = np.zeros((bits.shape[0], len(live)), dtype=bool)
    ratings = np.empty(len(live))
    for j, b in enumerate(live):
        crossing[:, j] = bits[:, b.from_bus] != bits[:, b.to_bus]
        ratings[j] = b.rating
    transfer = bits @ inj
    margins = crossing @ ratings - transfer

    t_m = float(np.min(margins))
    if t_m >= -SATURATION_TOL:
        return FTResult(branch=idx, is_special=False)
    best = None
    for i in np.flatnonzero(margins <= t_m + 1e-12):
        cut = tuple(sorted([live[j].id for j in np.flatnonzero(crossing[i])] + [idx]))
        side = frozenset(int(b) for b in np.flatnonzero(bits[i]))
        if best is None or cut < best[0]:
            best = (cut, side)
    return FTResult(branch=idx, is_special=True, t_m=t_m,
                    k_crit=frozenset(best[0]), source_side=best[1])


def screen_all(fs: FlowState, candidates=None) -> ScreeningResult:
    """Run the feasibility test over the candidates (default: every
    in-service branch).  Candidate order does not affect the outcome."""
    net = fs.net
    if candidates is None:
        ids = net.in_service_ids()
    else:
        ids = sorted(net.branch_index(c) for c in candidates)
    results = {i: feasibility_test(fs, i) for i in ids}
    return ScreeningResult(results=results, snapshot=net.fingerprint())


def shortlist_after_outage(prev_results: dict, outaged, reroute_branches,
                           net: Network | None = None) -> frozenset:
    """Branches whose verdict may have changed after an outage + reroute.

    Everything else provably keeps its verdict: its own flow and every
    capacity its stored witness relies on are untouched.  Previously special
    branches are always re-tested.
    """
    touched = frozenset(reroute_branches) | {outaged}
    out = set()
    for b, res in prev_results.items():
        if b == outaged:
            continue
        if net is not None and not net.branches[b].in_service:
            continue
        if res.is_special or (res.witness is not None and res.witness & touched):
            out.add(b)
    return frozenset(out)


def shortlist_after_redispatch(prev_results: dict, touched_branches,
                               net: Network | None = None) -> frozenset:
    """Branches to re-test after an injection update touched some branches."""
    touched = frozenset(touched_branches)
    out = set()
    for b, res in prev_results.items():
        if net is not None and not net.branches[b].in_service:
            continue
        if res.is_special or (res.witness is not None and res.witness & touched):
            out.add(b)
    return frozenset(out)


def refresh_after_outage(prev: ScreeningResult, fs_new: FlowState, outaged: int,
                         reroute_branches) -> ScreeningResult:
    """Carry over untouched verdicts, re-screen the shortlist."""
    shortlist = shortlist_after_outage(prev.results, outaged, reroute_branches,
                                       net=fs_new.net)
    fresh = screen_all(fs_new, shortlist)
    merged = {b: r for b, r in prev.results.items()
              if b != outaged and fs_new.net.branches[b].in_service}
    merged.update(fresh.results)
    return ScreeningResult(results=merged, snapshot=fs_new.net.fingerprint())


def refresh_after_redispatch(prev: ScreeningResult, fs_new: FlowState,
                             touched_branches) -> ScreeningResult:
    shortlist = shortlist_after_redispatch(prev.results, touched_branches,
                                           net=fs_new.net)
    fresh = screen_all(fs_new, shortlist)
    merged = dict(prev.results)
    merged.update(fresh.results)
    return ScreeningResult(results=merged, snapshot=fs_new.net.fingerprint())
