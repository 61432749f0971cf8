"""Scenario driver: outage -> screening -> corrective dispatch -> commit.

A :class:`Session` owns the evolving state (snapshot, flow graph, screening
results, sensitivities, candidate solutions) and exposes the same step
primitives to the batch runner and the HTTP API, so a scripted replay of a
scenario through either surface produces identical records.

Per step: apply the outage and update the flow graph incrementally (a
failed update is itself a cut-set finding); shortlist and re-screen the
feasibility test; rank and screen contingencies; build and solve the
requested corrective modes, re-screening each candidate solution against a
hypothetical application until no new findings appear; commit one solution
by the deadline rule; update the flow graph for the new injections and
re-verify; cascade-check the committed state.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cascade import find_cascade_triggers
from .dispatch import (CutConstraint, DispatchSolution, apply_dispatch,
                       build_problem, cut_constraints_from_screening, solve,
                       verify_solution)
from .errors import (GridcutError, InfeasibleFlowError,
                     InfeasibleRedispatchError, IslandedNetworkError)
from .flowgraph import FlowState, build_flow_state, cut_transfer, \
    update_after_outage, update_after_redispatch
from .model import Network, apply_outage, validate
from .rtca import (ViolationList, rank_contingencies, screen_post_contingency,
                   select_top_fraction)
from .screening import (ScreeningResult, refresh_after_outage,
                        refresh_after_redispatch, screen_all)
from .sensitivity import compute_lodf, compute_ptdf, dc_power_flow

TWO_COMPONENT = "two-component"
POLICIES = (TWO_COMPONENT, "ica", "rca", "sced", "dcopf")


@dataclass(frozen=True)
class ScenarioEvent:
    t: float
    branch: str


@dataclass(frozen=True)
class ScenarioConfig:
    events: tuple = ()
    redispatch_interval_s: float = 600.0
    top_fraction: float = 0.30
    policy: str = TWO_COMPONENT
    time_source: str = "simulated"          # simulated | wall-clock
    simulated_times: tuple = ()             # per-step (t_i, t_r) seconds
    cascade_check: bool = True
    cascade_before: bool = True          # also sweep the pre-correction state
    halt_on_unresolved: bool = False
    max_refinements: int = 12

    def __post_init__(self):
        if self.redispatch_interval_s <= 0:
            raise ValueError("redispatch interval must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.time_source not in ("simulated", "wall-clock"):
            raise ValueError("time_source must be simulated or wall-clock")
        times = [e.t for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be strictly increasing")

    @staticmethod
    def from_dict(doc: dict) -> "ScenarioConfig":
        events = tuple(ScenarioEvent(t=float(e["t"]), branch=str(e["branch"]))
                       for e in doc.get("events", []))
        return ScenarioConfig(
            events=events,
            redispatch_interval_s=float(doc.get("redispatch_interval_s", 600.0)),
            top_fraction=float(doc.get("top_fraction", 0.30)),
            policy=doc.get("policy", TWO_COMPONENT),
            time_source=doc.get("time_source", "simulated"),
            simulated_times=tuple(tuple(p) for p in doc.get("simulated_times", [])),
            cascade_check=bool(doc.get("cascade_check", True)),
            cascade_before=bool(doc.get("cascade_before", True)),
            halt_on_unresolved=bool(doc.get("halt_on_unresolved", False)),
            max_refinements=int(doc.get("max_refinements", 12)))

    def to_dict(self) -> dict:
        return {
            "events": [{"t": e.t, "branch": e.branch} for e in self.events],
            "redispatch_interval_s": self.redispatch_interval_s,
            "top_fraction": self.top_fraction,
            "policy": self.policy,
            "time_source": self.time_source,
            "simulated_times": [list(p) for p in self.simulated_times],
            "cascade_check": self.cascade_check,
            "cascade_before": self.cascade_before,
            "halt_on_unresolved": self.halt_on_unresolved,
            "max_refinements": self.max_refinements,
        }


def choose_solution(t_i: float, t_r: float, t_d: float,
                    sol_i: DispatchSolution | None,
                    sol_r: DispatchSolution | None):
    """Deadline rule: the comprehensive solution is committed when it beats
    the deadline; otherwise the fast one; when both miss, the first deadline
    (multiples of the spacing) that either beats decides, still preferring
    the comprehensive one.  Returns (choice, deadline, rationale)."""
    ok_i = sol_i is not None and sol_i.status == "optimal"
    ok_r = sol_r is not None and sol_r.status == "optimal"
    if not ok_i and not ok_r:
        return None, None, "no optimal solution available"
    k = 1
    while True:
        deadline = k * t_d
        if ok_i and t_i < deadline:
            which = "ica"
            why = (f"comprehensive solve ({t_i:.3f}s) ready before deadline "
                   f"{deadline:.3f}s")
            return which, deadline, why
        if ok_r and t_r < deadline:
            return "rca", deadline, (f"fast solve ({t_r:.3f}s) ready before "
                                     f"deadline {deadline:.3f}s; comprehensive "
                                     "missed it")
        k += 1


@dataclass
class StepRecord:
    step: int
    outage: str
    e_s: list
    e_v: list
    triggers_before: list
    solutions: dict
    t_i: float | None
    t_r: float | None
    committed: str | None
    rationale: str
    deadline_s: float | None
    triggers_after: list
    gen_cost_total: float | None
    shed_mw: float | None
    residual_specials: list
    unresolved: bool

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ScenarioReport:
    case: str
    config: dict
    steps: list

    def to_dict(self) -> dict:
        steps = [s.to_dict() if isinstance(s, StepRecord) else s for s in self.steps]
        before = sum(len(s["triggers_before"]) for s in steps)
        after = sum(len(s["triggers_after"]) for s in steps)
        return {
            "case": self.case,
            "config": self.config,
            "steps": steps,
            "summary": {
                "n_steps": len(steps),
                "triggers_before_total": before,
                "triggers_after_total": after,
                "total_shed_mw": round(sum(s["shed_mw"] or 0.0 for s in steps), 6),
                "final_gen_cost": (steps[-1]["gen_cost_total"] if steps else None),
                "committed_sequence": [s["committed"] for s in steps],
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def to_csv(self) -> str:
        import csv
        import io
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["step", "outage", "e_s", "e_v", "triggers_before", "committed",
                    "t_i", "t_r", "gen_cost_total", "shed_mw", "triggers_after"])
        for s in self.steps:
            d = s.to_dict() if isinstance(s, StepRecord) else s
            w.writerow([
                d["step"], d["outage"],
                " ".join(e["branch"] for e in d["e_s"]),
                " ".join(d["e_v"]), " ".join(d["triggers_before"]),
                d["committed"], d["t_i"], d["t_r"],
                d["gen_cost_total"], d["shed_mw"],
                " ".join(d["triggers_after"])])
        return buf.getvalue()


@dataclass
class _ModeOutcome:
    solution: DispatchSolution
    violations_used: ViolationList | None
    cuts_used: tuple
    refinements: int
    measured_s: float      # deadline-rule time: injected when simulated
    wall_s: float = 0.0    # actual wall time of the whole solve


class Session:
    """Stateful scenario session shared by the batch runner and the API."""

    def __init__(self, net: Network, config: ScenarioConfig | None = None):
        report = validate(net)
        if not report.ok:
            raise GridcutError("case fails validation: " +
                               "; ".join(f.message for f in report.findings
                                         if f.severity == "fatal"))
        self.config = config or ScenarioConfig()
        self._initial_net = net
        self.records: list[StepRecord] = []
        self._bind_initial(net)

    def _bind_initial(self, net: Network) -> None:
        self.net = net
        self.fs: FlowState | None = build_flow_state(net)
        self.screening: ScreeningResult = screen_all(self.fs)
        self.flows = dc_power_flow(net, net.injections())
        self.ptdf = compute_ptdf(net)
        self.lodf = compute_lodf(net, self.ptdf)
        self.violations = self._rtca(net, self.flows, self.lodf)
        self.extra_cuts: list[CutConstraint] = []
        self.solutions: dict[str, _ModeOutcome] = {}
        self.applied_outages: list[str] = []
        self.step_index = 0
        self.pending_triggers_before: list[str] = []

    def reset(self) -> None:
        self.records = []
        self._bind_initial(self._initial_net)

    # -- step primitives ---------------------------------------------------

    def _rtca(self, net, flows, lodf) -> ViolationList:
        ranked = rank_contingencies(net, flows, lodf)
        top = select_top_fraction(ranked, self.config.top_fraction)
        screenable = [r for r in top if np.isfinite(r.severity)]
        return screen_post_contingency(net, flows, lodf, screenable)

    def apply_outage(self, branch) -> dict:
        idx = self.net.branch_index(branch)
        name = self.net.branches[idx].name
        new_net = apply_outage(self.net, idx)   # raises if unknown/already out
        from .model import connected_components
        if len(connected_components(new_net)) != 1:
            raise IslandedNetworkError(f"outage of {name} would island the network")
        if self.fs is not None:
            try:
                fs2, touched = update_after_outage(self.fs, idx)
                self.screening = refresh_after_outage(self.screening, fs2, idx, touched)
                self.fs = fs2
                self.extra_cuts = []
            except InfeasibleFlowError as exc:
                # the realized outage itself saturates a cut: no valid flow
                # graph exists until redispatch relieves the certificate cut
                self.fs = None
                self.screening = ScreeningResult(results={}, snapshot=new_net.fingerprint())
                self.extra_cuts = [CutConstraint(
                    members=exc.cut_branches, source_side=exc.source_side,
                    excluded=None, label=f"outage {name}")]
        else:
            self.extra_cuts = list(self.extra_cuts)
        self.net = new_net
        self.applied_outages.append(name)
        self.flows = dc_power_flow(new_net, new_net.injections())
        self.ptdf = compute_ptdf(new_net)
        self.lodf = compute_lodf(new_net, self.ptdf)
        self.violations = self._rtca(new_net, self.flows, self.lodf)
        self.solutions = {}
        self.pending_triggers_before = (
            sorted(self.net.branches[b].name
                   for b in find_cascade_triggers(self.net, flows=self.flows,
                                                  lodf=self.lodf))
            if self.config.cascade_check and self.config.cascade_before else [])
        return self.state_view()

    def _hypothetical_ft(self, net2, delta):
        """Flow state + screening as they would look after applying a solution."""
        if self.fs is not None:
            try:
                fs2, touched = update_after_redispatch(self.fs, delta)
                fs2 = fs2.with_network(net2)
                return fs2, refresh_after_redispatch(self.screening, fs2, touched)
            except InfeasibleRedispatchError:
                pass
        fs2 = build_flow_state(net2)   # may raise InfeasibleFlowError
        return fs2, screen_all(fs2)

    def solve_mode(self, mode: str, simulated_time: float | None = None) -> _ModeOutcome:
        """Solve one mode, iterating screening feedback to a fixed point.

        Each candidate solution is screened on a hypothetical application;
        newly surfaced special assets / critical contingencies are added to
        the problem until none appear, so a committed solution leaves no
        finding it was responsible for.
        """
        t0 = time.perf_counter()
        net = self.net
        merged_viol = dict(self.violations.entries)
        cuts = list(self.extra_cuts)
        if mode in ("ica", "rca"):
            cuts = cut_constraints_from_screening(self.screening, net) + cuts
        seen_cuts = {(c.members, c.source_side, c.excluded) for c in cuts}
        outcome = None
        refinements = 0
        x_hint = None
        for refinements in range(self.config.max_refinements):
            viol = ViolationList(entries=dict(merged_viol), snapshot=net.fingerprint())
            prob = build_problem(mode, net, self.flows, self.ptdf, self.lodf,
                                 violations=viol, cutsets=tuple(cuts))
            sol = solve(prob, x0_hint=x_hint)
            x_hint = sol.x if sol.status == "optimal" else None
            if sol.status != "optimal":
                outcome = _ModeOutcome(sol, viol, tuple(cuts), refinements, 0.0)
                break
            net2, delta = apply_dispatch(net, sol)
            new_findings = False
            if mode in ("ica", "rca"):
                try:
                    _, screening2 = self._hypothetical_ft(net2, delta)
                    for b, r in screening2.special_assets.items():
                        key = (r.k_crit, r.source_side, b)
                        if key not in seen_cuts:
                            seen_cuts.add(key)
                            cuts.append(CutConstraint(
                                members=r.k_crit, source_side=r.source_side,
                                excluded=b, label=net.branches[b].name))
                            new_findings = True
                except InfeasibleFlowError as exc:
                    key = (exc.cut_branches, exc.source_side, None)
                    if key not in seen_cuts:
                        seen_cuts.add(key)
                        cuts.append(CutConstraint(
                            members=exc.cut_branches, source_side=exc.source_side,
                            excluded=None, label="rebuild"))
                        new_findings = True
            if mode in ("ica", "sced"):
                flows2 = dc_power_flow(net2, net2.injections())
                lodf2 = dataclasses.replace(self.lodf, snapshot=net2.fingerprint())
                viol2 = self._rtca(net2, flows2, lodf2)
                for k, entries in viol2.entries.items():
                    if k not in merged_viol:
                        merged_viol[k] = entries
                        new_findings = True
            if not new_findings:
                outcome = _ModeOutcome(sol, viol, tuple(cuts), refinements, 0.0)
                break
        if outcome is None:
            sol.status = "iteration-limit"
            outcome = _ModeOutcome(sol, viol, tuple(cuts), refinements, 0.0)
        measured = time.perf_counter() - t0
        outcome.wall_s = measured
        outcome.measured_s = (simulated_time if simulated_time is not None
                              else measured)
        outcome.solution.solve_time = outcome.measured_s
        self.solutions[mode] = outcome
        return outcome

    def solve_step_modes(self, step_index: int) -> None:
        """Solve the modes the policy asks for, with per-step times."""
        cfg = self.config
        t_pair = (cfg.simulated_times[step_index]
                  if cfg.time_source == "simulated"
                  and step_index < len(cfg.simulated_times) else None)
        if cfg.policy == TWO_COMPONENT:
            if cfg.time_source == "wall-clock":
                with ThreadPoolExecutor(max_workers=2) as pool:
                    f_i = pool.submit(self.solve_mode, "ica")
                    f_r = pool.submit(self.solve_mode, "rca")
                    f_i.result()
                    f_r.result()
            else:
                self.solve_mode("ica", simulated_time=t_pair[0] if t_pair else 0.0)
                self.solve_mode("rca", simulated_time=t_pair[1] if t_pair else 0.0)
        else:
            t = t_pair[0] if t_pair else (None if cfg.time_source == "wall-clock"
                                          else 0.0)
            self.solve_mode(cfg.policy, simulated_time=t)

    def commit(self, mode: str | None = None) -> StepRecord:
        """Apply one of the solved modes (deadline rule when mode is None)."""
        cfg = self.config
        t_d = cfg.redispatch_interval_s
        out_i = self.solutions.get("ica")
        out_r = self.solutions.get("rca")
        t_i = out_i.measured_s if out_i else None
        t_r = out_r.measured_s if out_r else None
        deadline = None
        rationale = ""
        if mode is None:
            if cfg.policy == TWO_COMPONENT:
                mode, deadline, rationale = choose_solution(
                    t_i if t_i is not None else float("inf"),
                    t_r if t_r is not None else float("inf"),
                    t_d,
                    out_i.solution if out_i else None,
                    out_r.solution if out_r else None)
            else:
                mode = cfg.policy
                rationale = f"single-mode policy {cfg.policy}"
        else:
            rationale = f"operator committed {mode}"
        outcome = self.solutions.get(mode) if mode else None
        unresolved = outcome is None or outcome.solution.status != "optimal"

        e_s = self._es_entries()
        e_v = [self.net.branches[k].name for k in self.violations.e_v]
        residual_specials: list[str] = []
        gen_cost = None
        shed = None
        if not unresolved:
            sol = outcome.solution
            net2, delta = apply_dispatch(self.net, sol)
            if self.fs is not None:
                try:
                    fs2, touched = update_after_redispatch(self.fs, delta)
                    fs2 = fs2.with_network(net2)
                    screening2 = refresh_after_redispatch(self.screening, fs2, touched)
                except InfeasibleRedispatchError:
                    fs2 = build_flow_state(net2)
                    screening2 = screen_all(fs2)
            else:
                fs2 = build_flow_state(net2)
                screening2 = screen_all(fs2)
            residual_specials = [net2.branches[b].name
                                 for b in sorted(screening2.special_assets)]
            self.net = net2
            self.fs = fs2
            self.screening = screening2
            self.flows = dc_power_flow(net2, net2.injections())
            self.ptdf = dataclasses.replace(self.ptdf, snapshot=net2.fingerprint())
            self.lodf = dataclasses.replace(self.lodf, snapshot=net2.fingerprint())
            self.violations = self._rtca(net2, self.flows, self.lodf)
            self.extra_cuts = []
            gen_cost = sol.gen_cost_total
            shed = sol.load_shed_total
        elif cfg.halt_on_unresolved:
            raise GridcutError(f"step {self.step_index}: no committable solution")

        triggers_after = (
            sorted(self.net.branches[b].name
                   for b in find_cascade_triggers(self.net, flows=self.flows,
                                                  lodf=self.lodf))
            if cfg.cascade_check and not unresolved else
            list(self.pending_triggers_before) if cfg.cascade_check else [])
        record = StepRecord(
            step=self.step_index,
            outage=self.applied_outages[-1] if self.applied_outages else "",
            e_s=e_s, e_v=e_v,
            triggers_before=list(self.pending_triggers_before),
            solutions={m: o.solution.summary() for m, o in
                       sorted(self.solutions.items())},
            t_i=t_i, t_r=t_r,
            committed=mode if not unresolved else None,
            rationale=rationale, deadline_s=deadline,
            triggers_after=triggers_after,
            gen_cost_total=gen_cost, shed_mw=shed,
            residual_specials=residual_specials,
            unresolved=bool(unresolved))
        self.records.append(record)
        self.solutions = {}
        self.step_index += 1
        return record

    # -- views ---------------------------------------------------------------

    def _es_entries(self) -> list[dict]:
        out = []
        for b, r in sorted(self.screening.special_assets.items()):
            entry = {
                "branch": self.net.branches[b].name,
                "t_m": round(float(r.t_m), 6),
                "k_crit": sorted(self.net.branches[l].name for l in r.k_crit),
                "side_a": sorted(self.net.buses[v].name for v in r.source_side),
            }
            if self.fs is not None:
                f_k, r_k = cut_transfer(self.fs, r.source_side)
                entry["f_k"] = round(f_k, 6)
                entry["r_k"] = round(r_k, 6)
            out.append(entry)
        for c in self.extra_cuts:
            out.append({
                "branch": c.label,
                "t_m": None,
                "k_crit": sorted(self.net.branches[l].name for l in c.members),
                "side_a": sorted(self.net.buses[v].name for v in c.source_side),
            })
        return out

    def state_view(self) -> dict:
        net = self.net
        return {
            "step": self.step_index,
            "applied_outages": list(self.applied_outages),
            "network": {
                "case": net.fingerprint(),
                "buses": net.n_buses,
                "branches_in_service": len(net.in_service_ids()),
                "total_generation_mw": round(net.total_generation(), 6),
                "total_demand_mw": round(net.total_demand(), 6),
            },
            "flow_graph_available": self.fs is not None,
            "e_s": self._es_entries(),
            "e_v": [net.branches[k].name for k in self.violations.e_v],
            "violations": self.violations.to_dict(net),
            "triggers_before": list(self.pending_triggers_before),
            "deadline_s": self.config.redispatch_interval_s,
        }

    def report(self) -> ScenarioReport:
        return ScenarioReport(case=self._initial_net.fingerprint(),
                              config=self.config.to_dict(),
                              steps=list(self.records))


def run_scenario(net: Network, config: ScenarioConfig) -> ScenarioReport:
    """Run the full outage sequence under the configured policy."""
    session = Session(net, config)
    for i, event in enumerate(config.events):
        session.apply_outage(event.branch)
        session.solve_step_modes(i)
        session.commit()
    return session.report()
