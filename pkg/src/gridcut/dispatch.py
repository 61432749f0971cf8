"""Corrective-redispatch QP assembly and solution.

Four modes share one objective (quadratic generation-change cost plus linear
load-shed cost) and differ only in which security blocks they model:

    dcopf   base flows + injection bounds + balance
    sced    ... + post-contingency flow rows for the critical contingencies
    rca     base blocks + cut-set transfer rows
    ica     everything

Decision variables are per-generator output changes and per-load sheds
(shed >= 0; a shed raises the bus's net injection, so its flow sensitivity
is the plain injection-shift factor and the balance row reads
sum(dG) + sum(shed) = 0).

Base-flow and post-contingency rows are instantiated eagerly only when
their slack at zero change is inside a margin of the rating; the rest are
row-generated on violation, which never changes the optimum because a point
feasible for every conceptual row is optimal for the full problem.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import SnapshotMismatchError, SolverError
from .model import Network
from .qp import QpSolution, kkt_residual, solve_qp
from .rtca import ViolationList
from .screening import ScreeningResult
from .sensitivity import LodfMatrix, PtdfMatrix

MODES = ("ica", "rca", "sced", "dcopf")
SPARSIFY_DEFAULT_THRESHOLD = 0.02
SPARSIFY_AUTO_BUSES = 500
ROW_MARGIN = 0.20
CONSTRAINT_TOL = 1e-6


@dataclass(frozen=True)
class CutConstraint:
    """Limit on the flow-change sum across one cut.

    ``members`` are the crossing branches (signed toward ``source_side``);
    ``excluded`` is the prospective outage whose rating does not survive,
    or None when the cut is already missing that branch.
    """
    members: frozenset
    source_side: frozenset
    excluded: int | None
    label: str = ""


def cut_constraints_from_screening(screening, net: Network) -> list[CutConstraint]:
    """One cut row per special asset (its limiting critical cut-set)."""
    if isinstance(screening, ScreeningResult):
        items = screening.special_assets
    else:
        items = screening
    out = []
    for b, res in sorted(items.items()):
        if not res.is_special:
            continue
        out.append(CutConstraint(members=res.k_crit, source_side=res.source_side,
                                 excluded=b, label=net.branches[b].name))
    return out


@dataclass(frozen=True)
class _RowMeta:
    block: str                   # base-flow | gen-bound | shed-bound | post-contingency | cut-transfer
    branch: int | None = None
    contingency: int | None = None
    side: int = 1                # +1 upper, -1 lower


@dataclass(eq=False)
class DispatchProblem:
    mode: str
    net: Network
    flows: np.ndarray
    ptdf: PtdfMatrix
    lodf: LodfMatrix
    e_v: tuple
    e_v_info: tuple                # critical contingencies, whether modeled or not
    cuts: tuple
    gens: tuple
    loads: tuple
    live: np.ndarray             # in-service branch ids
    var_bus: np.ndarray
    h_diag: np.ndarray
    g_lin: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    m_raw: np.ndarray            # branch-flow sensitivity to variables
    m_post: np.ndarray           # ditto, used for post-contingency rows
    rows_a: list = field(default_factory=list)
    rows_b: list = field(default_factory=list)
    rows_meta: list = field(default_factory=list)
    snapshot: str = ""

    # conceptual block sizes, before any pruning / row generation
    @property
    def eq_base_flow_pairs(self) -> int:
        return len(self.live)

    @property
    def eq_post_contingency_pairs(self) -> int:
        return len(self.e_v) * len(self.live)

    @property
    def eq_cut_rows(self) -> int:
        return len(self.cuts)

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.h_diag * x) + self.g_lin @ x)


@dataclass(eq=False)
class DispatchSolution:
    mode: str
    status: str                          # optimal | infeasible | iteration-limit
    delta_g: np.ndarray
    shed: np.ndarray
    objective: float
    gen_cost_total: float
    load_shed_total: float
    kkt_residual: float
    x: np.ndarray
    lam_eq: np.ndarray
    lam_in: np.ndarray
    rows_a: np.ndarray
    rows_b: np.ndarray
    rows_meta: tuple
    problem: DispatchProblem
    iterations: int = 0
    infeasibility_hint: str = ""
    solve_time: float = 0.0

    def summary(self) -> dict:
        def clean(v):
            return round(float(v), 9) if np.isfinite(v) else None
        return {
            "mode": self.mode,
            "status": self.status,
            "objective": clean(self.objective),
            "gen_cost_total": clean(self.gen_cost_total),
            "load_shed_mw": clean(self.load_shed_total),
            "kkt_residual": clean(self.kkt_residual),
            "solve_time_s": self.solve_time,
            "infeasibility_hint": self.infeasibility_hint,
        }


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    block_residuals: dict
    kkt_residual: float
    unmodeled_overloads: tuple = ()      # (contingency, branch, flow, rating)


def _sigma(cut: CutConstraint, net: Network) -> dict:
    side = cut.source_side
    return {l: (1.0 if net.branches[l].from_bus in side else -1.0)
            for l in cut.members}


def _cut_row(cut: CutConstraint, net: Network, flows: np.ndarray,
             m_raw: np.ndarray):
    sig = _sigma(cut, net)
    coef = np.zeros(m_raw.shape[1])
    base = 0.0
    surviving = 0.0
    for l, s in sorted(sig.items()):
        coef += s * m_raw[l]
        base += s * float(flows[l])
        if l != cut.excluded:
            surviving += net.branch_rating[l]
    # transfer after redispatch must fit within the surviving ratings
    return coef, surviving - base


def build_problem(mode: str, net: Network, flows: np.ndarray, ptdf: PtdfMatrix,
                  lodf: LodfMatrix, violations: ViolationList | None = None,
                  cutsets=None, sparsify: bool | None = None,
                  sparsify_threshold: float = SPARSIFY_DEFAULT_THRESHOLD,
                  margin: float = ROW_MARGIN) -> DispatchProblem:
    """Assemble the QP for one mode from one snapshot's screening results.

    ``cutsets`` accepts a ScreeningResult, a special-asset mapping, or a
    prepared list of :class:`CutConstraint`.  Raises SnapshotMismatchError
    when any input was derived from a different snapshot.
    """
    if mode not in MODES:
        raise ValueError(f"unknown dispatch mode {mode!r}")
    snap = net.fingerprint()
    for tagged in (ptdf, lodf):
        if tagged.snapshot != snap:
            raise SnapshotMismatchError(f"{type(tagged).__name__} is from a "
                                        "different snapshot")
    e_v: tuple = ()
    e_v_info: tuple = ()
    if violations is not None:
        if violations.snapshot != snap:
            raise SnapshotMismatchError("violation list is from a different snapshot")
        e_v_info = tuple(violations.e_v)
        if mode in ("ica", "sced"):
            e_v = e_v_info
    cuts: tuple = ()
    if mode in ("ica", "rca") and cutsets is not None:
        if isinstance(cutsets, ScreeningResult) and cutsets.snapshot != snap:
            raise SnapshotMismatchError("screening result is from a different snapshot")
        if isinstance(cutsets, (list, tuple)):
            cuts = tuple(cutsets)
        else:
            cuts = tuple(cut_constraints_from_screening(cutsets, net))

    gens = net.generators
    loads = net.loads
    ng, nl = len(gens), len(loads)
    nv = ng + nl
    var_bus = np.array([g.bus for g in gens] + [ld.bus for ld in loads], dtype=np.int64)
    h_diag = np.array([2.0 * g.cost_c for g in gens] + [0.0] * nl)
    g_lin = np.array([2.0 * g.cost_c * g.p + g.cost_b for g in gens]
                     + [ld.shed_cost for ld in loads])
    a_eq = np.ones((1, nv))
    b_eq = np.zeros(1)

    m_raw = ptdf.matrix[:, var_bus]
    if sparsify is None:
        sparsify = mode in ("ica", "sced") and net.n_buses > SPARSIFY_AUTO_BUSES
    if sparsify:
        # rounded coefficients only for the bulky post-contingency block;
        # base-flow and cut rows stay exact so the committed dispatch is
        # strictly rating-feasible
        coarse = ptdf.matrix.copy()
        coarse[np.abs(coarse) < sparsify_threshold] = 0.0
        m_post = coarse[:, var_bus]
    else:
        m_post = m_raw

    live = np.array(net.in_service_ids(), dtype=np.int64)
    flows = np.asarray(flows, dtype=float)
    prob = DispatchProblem(
        mode=mode, net=net, flows=flows, ptdf=ptdf, lodf=lodf, e_v=e_v,
        e_v_info=e_v_info, cuts=cuts,
        gens=gens, loads=loads, live=live, var_bus=var_bus, h_diag=h_diag,
        g_lin=g_lin, a_eq=a_eq, b_eq=b_eq, m_raw=m_raw, m_post=m_post,
        snapshot=snap)

    add = _add_row(prob)
    for i, g in enumerate(gens):
        e = np.zeros(nv)
        e[i] = 1.0
        add(e, g.p_max - g.p, _RowMeta("gen-bound", branch=None, side=+1))
        add(-e, g.p - g.p_min, _RowMeta("gen-bound", branch=None, side=-1))
    for j, ld in enumerate(loads):
        e = np.zeros(nv)
        e[ng + j] = 1.0
        add(e, ld.p - ld.p_min, _RowMeta("shed-bound", branch=None, side=+1))
        add(-e, 0.0, _RowMeta("shed-bound", branch=None, side=-1))

    for l in live:
        r = net.branch_rating[l]
        hi = r - flows[l]
        lo = r + flows[l]
        if hi < margin * r:
            add(m_raw[l], hi, _RowMeta("base-flow", branch=int(l), side=+1))
        if lo < margin * r:
            add(-m_raw[l], lo, _RowMeta("base-flow", branch=int(l), side=-1))

    for k in e_v:
        lodf_col = lodf.matrix[:, k]
        base = flows + lodf_col * flows[k]
        for l in live:
            if l == k:
                continue
            r = net.branch_rating[l]
            hi = r - base[l]
            lo = r + base[l]
            if hi < margin * r or lo < margin * r:
                coef = m_post[l] + lodf_col[l] * m_post[k]
                if hi < margin * r:
                    add(coef, hi, _RowMeta("post-contingency", branch=int(l),
                                           contingency=int(k), side=+1))
                if lo < margin * r:
                    add(-coef, lo, _RowMeta("post-contingency", branch=int(l),
                                            contingency=int(k), side=-1))

    for cut in cuts:
        coef, rhs = _cut_row(cut, net, flows, m_raw)
        add(coef, rhs, _RowMeta("cut-transfer", branch=cut.excluded, side=+1))

    return prob


def _add_row(prob: DispatchProblem):
    def add(coef, rhs, meta):
        prob.rows_a.append(np.asarray(coef, dtype=float))
        prob.rows_b.append(float(rhs))
        prob.rows_meta.append(meta)
    return add


def _violated_lazy_rows(prob: DispatchProblem, x: np.ndarray,
                        existing: set) -> list:
    """Base-flow / post-contingency sides violated at x but not yet modeled."""
    net = prob.net
    out = []
    raw_df = prob.m_raw @ x
    f_new = prob.flows + raw_df
    for l in prob.live:
        r = net.branch_rating[l]
        if f_new[l] > r + CONSTRAINT_TOL and ("base-flow", int(l), None, +1) not in existing:
            out.append((prob.m_raw[l], r - prob.flows[l],
                        _RowMeta("base-flow", branch=int(l), side=+1)))
        if -f_new[l] > r + CONSTRAINT_TOL and ("base-flow", int(l), None, -1) not in existing:
            out.append((-prob.m_raw[l], r + prob.flows[l],
                        _RowMeta("base-flow", branch=int(l), side=-1)))
    if prob.e_v:
        post_df = raw_df if prob.m_post is prob.m_raw else prob.m_post @ x
        for k in prob.e_v:
            lodf_col = prob.lodf.matrix[:, k]
            fc = (prob.flows + post_df) + lodf_col * (prob.flows[k] + post_df[k])
            base = prob.flows + lodf_col * prob.flows[k]
            for l in prob.live:
                if l == k:
                    continue
                r = net.branch_rating[l]
                if fc[l] > r + CONSTRAINT_TOL and \
                        ("post-contingency", int(l), int(k), +1) not in existing:
                    coef = prob.m_post[l] + lodf_col[l] * prob.m_post[k]
                    out.append((coef, r - base[l],
                                _RowMeta("post-contingency", branch=int(l),
                                         contingency=int(k), side=+1)))
                if -fc[l] > r + CONSTRAINT_TOL and \
                        ("post-contingency", int(l), int(k), -1) not in existing:
                    coef = prob.m_post[l] + lodf_col[l] * prob.m_post[k]
                    out.append((-coef, r + base[l],
                                _RowMeta("post-contingency", branch=int(l),
                                         contingency=int(k), side=-1)))
    return out


def solve(problem: DispatchProblem, max_rounds: int = 40,
          x0_hint=None) -> DispatchSolution:
    """Row-generating solve of the assembled problem.

    ``x0_hint`` warm-starts the first round (used by the screening feedback
    loop, whose successive problems differ by a handful of rows).

    Rows are deduplicated by coefficient direction before reaching the QP:
    parallel circuits make whole blocks of post-contingency rows that agree
    to ~1e-10, and keeping the near-twins only feeds every solver's
    degeneracy.  Within a direction bucket the tightest bound wins, which
    enforces at least as much as the dropped twins (their residual
    difference is below the feasibility tolerance).
    """
    t0 = time.perf_counter()
    rows_a: list = []
    rows_b: list = []
    meta: list = []
    existing: set = set()
    by_direction: dict = {}

    def push(coef, rhs, m):
        coef = np.asarray(coef, dtype=float)
        rhs = float(rhs)
        existing.add((m.block, m.branch, m.contingency, m.side))
        key = (coef.round(9) + 0.0).tobytes()   # + 0.0 folds -0.0 into 0.0
        idx = by_direction.get(key)
        if idx is not None:
            if rhs < rows_b[idx] - 1e-12:
                rows_b[idx] = rhs
                meta[idx] = m
            return
        by_direction[key] = len(rows_a)
        rows_a.append(coef)
        rows_b.append(rhs)
        meta.append(m)

    for coef, rhs, m in zip(problem.rows_a, problem.rows_b, problem.rows_meta):
        push(coef, rhs, m)

    qsol: QpSolution | None = None
    x_prev = None if x0_hint is None else np.asarray(x0_hint, dtype=float)
    warm: tuple = ()
    for _ in range(max_rounds):
        a_in = np.vstack(rows_a) if rows_a else np.zeros((0, len(problem.g_lin)))
        b_in = np.array(rows_b)
        qsol = solve_qp(problem.h_diag * np.eye(len(problem.g_lin)), problem.g_lin,
                        problem.a_eq, problem.b_eq, a_in, b_in,
                        x0=x_prev, warm_working=warm)
        if qsol.status == "iteration-limit":
            # active-set stall on a degenerate vertex family: hand the same
            # rows to the interior-point fallback
            from .qp import solve_qp_interior
            qsol = solve_qp_interior(
                problem.h_diag * np.eye(len(problem.g_lin)), problem.g_lin,
                problem.a_eq, problem.b_eq, a_in, b_in)
        if qsol.status != "optimal":
            break
        new = _violated_lazy_rows(problem, qsol.x, existing)
        if not new:
            break
        x_prev = qsol.x
        warm = qsol.working
        for coef, rhs, m in new:
            push(coef, rhs, m)
    else:
        raise SolverError("row generation did not settle")
    elapsed = time.perf_counter() - t0

    hint = ""
    if qsol.status == "infeasible":
        blocks = sorted({meta[r].block for kind, r in qsol.infeasible_rows
                         if kind == "ineq"} |
                        ({"balance"} if any(k == "eq" for k, _ in qsol.infeasible_rows)
                         else set()))
        hint = "phase-1 failed in: " + ", ".join(blocks or ["unknown"])
        x = np.zeros(len(problem.g_lin))
    else:
        x = qsol.x
    ng = len(problem.gens)
    delta_g = x[:ng].copy()
    shed = x[ng:].copy()
    gen_cost = sum(g.cost_at(g.p + delta_g[i]) for i, g in enumerate(problem.gens))
    a_in = np.vstack(rows_a) if rows_a else np.zeros((0, len(problem.g_lin)))
    return DispatchSolution(
        mode=problem.mode, status=qsol.status, delta_g=delta_g, shed=shed,
        objective=problem.objective(x) if qsol.status == "optimal" else float("nan"),
        gen_cost_total=float(gen_cost), load_shed_total=float(np.sum(shed)),
        kkt_residual=qsol.kkt_residual if qsol.kkt is not None else float("inf"),
        x=x, lam_eq=qsol.lam_eq, lam_in=qsol.lam_in,
        rows_a=a_in, rows_b=np.array(rows_b), rows_meta=tuple(meta),
        problem=problem, iterations=qsol.iterations, infeasibility_hint=hint,
        solve_time=elapsed)


def verify_solution(problem: DispatchProblem, solution: DispatchSolution) -> VerificationReport:
    """Re-evaluate every block from raw (unrounded) sensitivities.

    Post-contingency flows are always evaluated; for modes that do not model
    them the overloads are reported informationally instead of failing.
    """
    if solution.status != "optimal":
        raise ValueError("verification requires an optimal solution")
    net = problem.net
    x = solution.x
    res: dict[str, float] = {}
    df = problem.m_raw @ x
    f_new = problem.flows + df
    live = problem.live
    res["base-flow"] = float(np.max(
        np.abs(f_new[live]) - net.branch_rating[live], initial=0.0))
    ng = len(problem.gens)
    res["gen-bound"] = max(
        (max(g.p_min - (g.p + x[i]), (g.p + x[i]) - g.p_max, 0.0)
         for i, g in enumerate(problem.gens)), default=0.0)
    res["shed-bound"] = max(
        (max(-x[ng + j], x[ng + j] - (ld.p - ld.p_min), 0.0)
         for j, ld in enumerate(problem.loads)), default=0.0)
    res["balance"] = abs(float(np.sum(x)))

    overloads = []
    worst_post = 0.0
    for k in problem.e_v_info or ():
        lodf_col = problem.lodf.matrix[:, k]
        fc = f_new + lodf_col * f_new[k]
        for l in live:
            if l == k:
                continue
            over = abs(float(fc[l])) - net.branch_rating[l]
            if over > worst_post:
                worst_post = over
            if over > CONSTRAINT_TOL:
                overloads.append((int(k), int(l), float(fc[l]),
                                  float(net.branch_rating[l])))
    if problem.mode in ("ica", "sced"):
        res["post-contingency"] = worst_post

    worst_cut = 0.0
    for cut in problem.cuts:
        coef, rhs = _cut_row(cut, net, problem.flows, problem.m_raw)
        worst_cut = max(worst_cut, float(coef @ x - rhs))
    if problem.mode in ("ica", "rca"):
        res["cut-transfer"] = worst_cut

    kk = kkt_residual(problem.h_diag * np.eye(len(x)), problem.g_lin,
                      problem.a_eq, problem.b_eq,
                      solution.rows_a, solution.rows_b,
                      x, solution.lam_eq, solution.lam_in)
    ok = all(v <= CONSTRAINT_TOL for v in res.values()) and kk.worst <= 1e-6
    return VerificationReport(ok=ok, block_residuals=res, kkt_residual=kk.worst,
                              unmodeled_overloads=tuple(overloads))


def apply_dispatch(net: Network, solution: DispatchSolution):
    """Apply an optimal solution: new snapshot plus the injection delta.

    Shed demand is not restorable: the new load ceiling is the post-shed
    demand, so later dispatches cannot buy the load back.
    """
    from dataclasses import replace

    from .flowgraph import InjectionDelta

    if solution.status != "optimal":
        raise ValueError("only optimal solutions can be applied")
    gens = []
    for i, g in enumerate(net.generators):
        p = g.p + float(solution.delta_g[i])
        if p < g.p_min - CONSTRAINT_TOL or p > g.p_max + CONSTRAINT_TOL:
            raise SolverError(f"dispatch violates limits of generator at bus {g.bus}")
        gens.append(replace(g, p=min(max(p, g.p_min), g.p_max)))
    loads = []
    for j, ld in enumerate(net.loads):
        p = ld.p - float(solution.shed[j])
        if p < ld.p_min - CONSTRAINT_TOL:
            raise SolverError(f"dispatch sheds below the floor of load at bus {ld.bus}")
        p = max(p, ld.p_min)
        loads.append(replace(ld, p=p, p_max=p, p_min=min(ld.p_min, p)))
    new_net = Network(net.buses, net.branches, gens, loads,
                      mva_base=net.mva_base, reference_bus=net.reference_bus)
    delta = np.zeros(net.n_buses)
    for i, g in enumerate(net.generators):
        delta[g.bus] += float(solution.delta_g[i])
    for j, ld in enumerate(net.loads):
        delta[ld.bus] += float(solution.shed[j])
    return new_net, InjectionDelta.from_vector(delta, tol=1e-9)
