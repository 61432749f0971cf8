"""Compare the compiled and pure-Python graph kernels on realistic work.

Times three workloads on the shipped 118-bus case:
  * feasible-flow construction (max-flow from the virtual source/sink)
  * one full cut-set screening pass (bounded max-flow per branch)
  * an outage + reroute + shortlist re-screen step

Run:  python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import statistics
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import gridcut._kernels as kernels
from gridcut import (build_flow_state, load_case, screen_all,
                     update_after_outage)
from gridcut.screening import refresh_after_outage

CASE = os.path.join(os.path.dirname(__file__), "..", "src", "gridcut", "data",
                    "case118.json")


def time_workloads(repeat: int):
    net = load_case(CASE)
    out = {}

    def bench(name, fn):
        samples = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        out[name] = min(samples)

    bench("build_flow_state", lambda: build_flow_state(net))
    fs = build_flow_state(net)
    bench("screen_all_186", lambda: screen_all(fs))
    screening = screen_all(fs)
    idx = net.branch_index("15-33")

    def outage_step():
        fs2, touched = update_after_outage(fs, idx)
        refresh_after_outage(screening, fs2, idx, touched)

    bench("outage_update_and_rescreen", outage_step)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    backends = kernels.available_backends()
    results = {}
    originals = (kernels.bfs_parents, kernels.max_flow, kernels.reachable)
    try:
        for name, mod in backends.items():
            kernels.bfs_parents = mod.bfs_parents
            kernels.max_flow = mod.max_flow
            kernels.reachable = mod.reachable
            results[name] = time_workloads(args.repeat)
    finally:
        kernels.bfs_parents, kernels.max_flow, kernels.reachable = originals

    names = sorted({k for r in results.values() for k in r})
    col = max(len(n) for n in names) + 2
    header = "workload".ljust(col) + "".join(f"{b:>16}" for b in results)
    if len(results) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for n in names:
        row = n.ljust(col)
        vals = [results[b][n] for b in results]
        for v in vals:
            row += f"{v * 1e3:>13.2f} ms"
        if len(vals) > 1:
            slow = max(vals)
            fast = min(vals)
            row += f"{slow / fast:>9.1f}x"
        print(row)
    if len(results) == 1:
        print("\n(compiled extension not built; only the fallback was timed)")


if __name__ == "__main__":
    main()
