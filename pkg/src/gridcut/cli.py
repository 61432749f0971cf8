"""Command-line interface: gridcut <subcommand>."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .cascade import find_cascade_triggers, simulate_cascade
from .dispatch import CutConstraint, build_problem, solve, verify_solution
from .errors import GridcutError
from .flowgraph import build_flow_state, cut_transfer
from .model import Network, apply_outage, load_case, validate
from .orchestrator import ScenarioConfig, Session, run_scenario
from .rtca import (Violation, ViolationList, rank_contingencies,
                   screen_post_contingency, select_top_fraction)
from .screening import screen_all
from .sensitivity import (compute_lodf, compute_ptdf, dc_power_flow,
                          dump_sensitivities)


def _load(path: str, shed_cost_default: float | None = None) -> Network:
    if shed_cost_default is not None:
        return load_case(path, default_shed_cost=shed_cost_default)
    return load_case(path)


def _apply_outages(net: Network, spec: str | None) -> Network:
    if not spec:
        return net
    for token in spec.split(","):
        net = apply_outage(net, token.strip())
    return net


def cmd_validate(args) -> int:
    net = _load(args.case)
    report = validate(net)
    if args.json:
        print(json.dumps(report.to_dict(), indent=1))
    else:
        print(f"ok={report.ok} components={report.components} "
              f"imbalance={report.imbalance_mw:.6f} MW")
        for f in report.findings:
            print(f"  [{f.severity}] {f.code}: {f.message}")
    return 0 if report.ok else 1


def cmd_ft(args) -> int:
    net = _apply_outages(_load(args.case), args.after_outage)
    fs = build_flow_state(net)
    screening = screen_all(fs)
    if args.dump_graph:
        import csv
        cap_fwd, cap_rev = fs.latent()
        with open(args.dump_graph, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["branch", "from", "to", "flow_mw", "latent_fwd_mw",
                        "latent_rev_mw"])
            for b in net.branches:
                if b.in_service:
                    w.writerow([b.name, net.buses[b.from_bus].name,
                                net.buses[b.to_bus].name,
                                f"{fs.flows[b.id]:.6f}",
                                f"{cap_fwd[b.id]:.6f}", f"{cap_rev[b.id]:.6f}"])
    entries = []
    for b, r in sorted(screening.special_assets.items()):
        f_k, r_k = cut_transfer(fs, r.source_side)
        entries.append({
            "branch": net.branches[b].name,
            "t_m": round(float(r.t_m), 6),
            "k_crit": sorted(net.branches[l].name for l in r.k_crit),
            "side_a": sorted(net.buses[v].name for v in r.source_side),
            "f_k": round(f_k, 6), "r_k": round(r_k, 6),
        })
    if args.json:
        print(json.dumps({"special_assets": entries}, indent=1))
    else:
        if not entries:
            print("no special assets")
        for e in entries:
            print(f"{e['branch']}: T_m={e['t_m']} MW  cut={{{', '.join(e['k_crit'])}}}"
                  f"  F/R={e['f_k']}/{e['r_k']}")
    return 0


def cmd_rtca(args) -> int:
    net = _apply_outages(_load(args.case), args.after_outage)
    flows = dc_power_flow(net, net.injections())
    ptdf = compute_ptdf(net)
    lodf = compute_lodf(net, ptdf)
    if args.dump_sensitivities:
        for p in dump_sensitivities(net, ptdf, lodf, args.dump_sensitivities):
            print(f"wrote {p}", file=sys.stderr)
    ranked = rank_contingencies(net, flows, lodf)
    top = select_top_fraction(ranked, args.top)
    screenable = [r for r in top if np.isfinite(r.severity)]
    violations = screen_post_contingency(net, flows, lodf, screenable)
    print(json.dumps({
        "ranked_top": [{"branch": net.branches[r.branch].name,
                        "severity": (r.severity if np.isfinite(r.severity)
                                     else "islanding")}
                       for r in top],
        "violations": violations.to_dict(net),
    }, indent=1))
    return 0


def _violations_from_json(net: Network, path: str) -> ViolationList:
    with open(path) as fh:
        doc = json.load(fh)
    entries = {}
    for k_name, rows in doc.items():
        k = net.branch_index(k_name)
        entries[k] = tuple(Violation(branch=net.branch_index(v["branch"]),
                                     flow_mw=float(v["flow_mw"]),
                                     rating_mw=float(v["rating_mw"]))
                           for v in rows)
    return ViolationList(entries=entries, snapshot=net.fingerprint())


def _cuts_from_json(net: Network, path: str) -> list[CutConstraint]:
    with open(path) as fh:
        doc = json.load(fh)
    rows = doc.get("special_assets", doc) if isinstance(doc, dict) else doc
    out = []
    bus_ids = {b.name: b.id for b in net.buses}
    for row in rows:
        out.append(CutConstraint(
            members=frozenset(net.branch_index(n) for n in row["k_crit"]),
            source_side=frozenset(bus_ids[n] for n in row["side_a"]),
            excluded=(net.branch_index(row["branch"])
                      if row.get("branch") and row.get("t_m") is not None else None),
            label=str(row.get("branch", ""))))
    return out


def cmd_dispatch(args) -> int:
    net = _apply_outages(_load(args.case, args.shed_cost_default), args.after_outage)
    flows = dc_power_flow(net, net.injections())
    ptdf = compute_ptdf(net)
    lodf = compute_lodf(net, ptdf)
    if args.violations:
        violations = _violations_from_json(net, args.violations)
    else:
        ranked = rank_contingencies(net, flows, lodf)
        top = [r for r in select_top_fraction(ranked, args.top)
               if np.isfinite(r.severity)]
        violations = screen_post_contingency(net, flows, lodf, top)
    if args.cutsets:
        cuts = _cuts_from_json(net, args.cutsets)
    else:
        from .dispatch import cut_constraints_from_screening
        cuts = cut_constraints_from_screening(screen_all(build_flow_state(net)), net)
    prob = build_problem(args.mode, net, flows, ptdf, lodf,
                         violations=violations, cutsets=cuts,
                         sparsify=args.sparsify,
                         sparsify_threshold=args.sparsify_threshold,
                         margin=args.row_margin)
    sol = solve(prob)
    out = sol.summary()
    out["delta_g"] = {net.buses[g.bus].name: round(float(d), 6)
                      for g, d in zip(net.generators, sol.delta_g)
                      if abs(d) > 1e-6}
    out["shed"] = {net.buses[ld.bus].name: round(float(s), 6)
                   for ld, s in zip(net.loads, sol.shed) if s > 1e-6}
    if sol.status == "optimal":
        out["verification"] = {
            "ok": verify_solution(prob, sol).ok,
            **{k: float(v) for k, v in
               verify_solution(prob, sol).block_residuals.items()},
        }
    text = json.dumps(out, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return 0 if sol.status == "optimal" else 1


def cmd_cascade(args) -> int:
    net = _apply_outages(_load(args.case), args.after_outage)
    if args.contingencies == "all":
        ids = net.in_service_ids()
    else:
        with open(args.contingencies) as fh:
            ids = [net.branch_index(x) for x in json.load(fh)]
    results = [simulate_cascade(net, k).to_dict(net) for k in ids]
    print(json.dumps(results, indent=1))
    return 0


def cmd_run(args) -> int:
    net = _load(args.case)
    with open(args.scenario) as fh:
        config = ScenarioConfig.from_dict(json.load(fh))
    report = run_scenario(net, config)
    text = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.to_csv())
    return 0


def cmd_serve(args) -> int:
    from .server import serve_api
    net = _load(args.case)
    config = None
    if args.scenario:
        with open(args.scenario) as fh:
            config = ScenarioConfig.from_dict(json.load(fh))
    serve_api(net, port=args.port, host=args.host, config=config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridcut",
                                description="cut-set screening and corrective "
                                            "redispatch for transmission grids")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("validate", help="ingest and sanity-check a case")
    sp.add_argument("case")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("ft", help="screen for cut-set saturating contingencies")
    sp.add_argument("case")
    sp.add_argument("--after-outage", help="comma-separated branches to remove first")
    sp.add_argument("--json", action="store_true")
    sp.add_argument("--dump-graph", help="write flow/latent-capacity edge list CSV")
    sp.set_defaults(fn=cmd_ft)

    sp = sub.add_parser("rtca", help="rank and screen post-contingency overloads")
    sp.add_argument("case")
    sp.add_argument("--after-outage")
    sp.add_argument("--top", type=float, default=0.30)
    sp.add_argument("--dump-sensitivities", metavar="DIR",
                    help="export PTDF/LODF matrices as CSV")
    sp.set_defaults(fn=cmd_rtca)

    sp = sub.add_parser("dispatch", help="solve a corrective dispatch")
    sp.add_argument("case")
    sp.add_argument("--mode", required=True, choices=["ica", "rca", "sced", "dcopf"])
    sp.add_argument("--after-outage")
    sp.add_argument("--violations", help="violation list JSON (default: run RTCA)")
    sp.add_argument("--cutsets", help="special-asset JSON (default: run FT)")
    sp.add_argument("--top", type=float, default=0.30)
    sp.add_argument("--sparsify", action="store_true", default=None)
    sp.add_argument("--shed-cost-default", type=float, default=None,
                    help="$/MW for loads without an explicit shed cost")
    sp.add_argument("--sparsify-threshold", type=float, default=0.02)
    sp.add_argument("--row-margin", type=float, default=0.20)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_dispatch)

    sp = sub.add_parser("cascade", help="simulate cascading failures")
    sp.add_argument("case")
    sp.add_argument("--after-outage")
    sp.add_argument("--contingencies", default="all",
                    help="'all' or a JSON file with a branch list")
    sp.set_defaults(fn=cmd_cascade)

    sp = sub.add_parser("run", help="run a batch outage scenario")
    sp.add_argument("case")
    sp.add_argument("scenario", help="scenario JSON")
    sp.add_argument("--out", help="write the report JSON here")
    sp.add_argument("--csv", help="also export a per-step CSV table")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("serve", help="serve the session HTTP API")
    sp.add_argument("case")
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--scenario", help="optional scenario config JSON")
    sp.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except GridcutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
