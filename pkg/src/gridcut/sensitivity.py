"""DC power flow and linear sensitivities (PTDF, LODF).

The DC model is linear, so injection-shift and outage-distribution factors
reproduce full re-solves exactly up to floating point; the test suite pins
that equivalence at 1e-8 MW.  Outages that would island the network have no
finite distribution factors; they are detected structurally (bridge search)
and reported in ``LodfMatrix.undefined_outages`` rather than by magnitude
blow-up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IslandedNetworkError, SingularSystemError
from .model import Network, bridges, connected_components

BALANCE_TOL = 1e-6


def _reduced_susceptance(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """Nodal susceptance matrix with the reference row/column removed.

    Returns (B_reduced, keep) where ``keep`` lists the retained bus ids.
    """
    n = net.n_buses
    b_mat = np.zeros((n, n))
    for br in net.branches:
        if not br.in_service:
            continue
        i, j, b = br.from_bus, br.to_bus, br.susceptance
        b_mat[i, i] += b
        b_mat[j, j] += b
        b_mat[i, j] -= b
        b_mat[j, i] -= b
    keep = np.array([i for i in range(n) if i != net.reference_bus])
    return b_mat[np.ix_(keep, keep)], keep


def dc_power_flow(net: Network, inj: np.ndarray) -> np.ndarray:
    """Branch flows (MW) for the given balanced bus injections.

    Satisfies nodal balance at every bus within 1e-6 MW; out-of-service
    branches carry zero.
    """
    inj = np.asarray(inj, dtype=float)
    if abs(float(np.sum(inj))) > BALANCE_TOL:
        raise ValueError("injections do not sum to zero")
    if len(connected_components(net)) != 1:
        raise IslandedNetworkError("in-service subgraph is not connected")
    b_red, keep = _reduced_susceptance(net)
    try:
        theta_red = np.linalg.solve(b_red, inj[keep] / net.mva_base)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"reduced susceptance system: {exc}") from None
    theta = np.zeros(net.n_buses)
    theta[keep] = theta_red
    flows = (net.branch_susceptance
             * (theta[net.branch_from] - theta[net.branch_to]) * net.mva_base)
    flows[~net.branch_in_service] = 0.0
    return flows


@dataclass(eq=False)
class PtdfMatrix:
    """Branch x bus injection-shift factors w.r.t. ``reference_bus``.

    ``matrix[l, i]`` is the MW flow change on branch ``l`` per MW injected at
    bus ``i`` and withdrawn at the reference bus.  Rows of out-of-service
    branches are zero; the reference column is zero.
    """
    matrix: np.ndarray
    reference_bus: int
    snapshot: str

    def flow_change(self, delta_inj: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(delta_inj, dtype=float)

    def sparsified(self, threshold: float = 0.02) -> np.ndarray:
        out = self.matrix.copy()
        out[np.abs(out) < threshold] = 0.0
        return out


def compute_ptdf(net: Network) -> PtdfMatrix:
    if len(connected_components(net)) != 1:
        raise IslandedNetworkError("in-service subgraph is not connected")
    n, m = net.n_buses, len(net.branches)
    b_red, keep = _reduced_susceptance(net)
    try:
        x_red = np.linalg.inv(b_red)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"reduced susceptance system: {exc}") from None
    x_full = np.zeros((n, n))
    x_full[np.ix_(keep, keep)] = x_red
    matrix = (net.branch_susceptance[:, None]
              * (x_full[net.branch_from, :] - x_full[net.branch_to, :]))
    matrix[~net.branch_in_service, :] = 0.0
    matrix[:, net.reference_bus] = 0.0
    return PtdfMatrix(matrix=matrix, reference_bus=net.reference_bus,
                      snapshot=net.fingerprint())


@dataclass(eq=False)
class LodfMatrix:
    """Monitored branch x outaged branch distribution factors.

    ``matrix[l, k]`` maps pre-outage flow on ``k`` to the flow increment on
    ``l`` after ``k`` trips; ``matrix[k, k] = -1``.  Columns of outages that
    would island the network (or are already out) are zero and their ids are
    listed in ``undefined_outages``.
    """
    matrix: np.ndarray
    undefined_outages: frozenset
    snapshot: str


def compute_lodf(net: Network, ptdf: PtdfMatrix) -> LodfMatrix:
    if ptdf.snapshot != net.fingerprint():
        from .errors import SnapshotMismatchError
        raise SnapshotMismatchError("PTDF was computed for a different snapshot")
    m = len(net.branches)
    # sensitivity of every flow to a unit from->to transfer on each branch
    line_ptdf = (ptdf.matrix[:, net.branch_from] - ptdf.matrix[:, net.branch_to])
    undefined = set(int(b) for b in bridges(net))
    undefined.update(int(b.id) for b in net.branches if not b.in_service)
    matrix = np.zeros((m, m))
    for k in range(m):
        if k in undefined:
            continue
        denom = 1.0 - line_ptdf[k, k]
        if abs(denom) < 1e-9:
            undefined.add(k)
            continue
        matrix[:, k] = line_ptdf[:, k] / denom
        matrix[k, k] = -1.0
    matrix[~net.branch_in_service, :] = 0.0
    for k in undefined:
        matrix[:, k] = 0.0
    return LodfMatrix(matrix=matrix, undefined_outages=frozenset(undefined),
                      snapshot=net.fingerprint())


def post_contingency_flows(flows: np.ndarray, lodf: LodfMatrix, k) -> np.ndarray:
    """Estimated flows after branch ``k`` trips; exact in the DC model."""
    k = int(k)
    if k in lodf.undefined_outages:
        raise IslandedNetworkError(f"outage of branch {k} islands the network")
    out = np.asarray(flows, dtype=float) + lodf.matrix[:, k] * float(flows[k])
    out[k] = 0.0
    return out


def dump_sensitivities(net: Network, ptdf: PtdfMatrix, lodf: LodfMatrix,
                       directory) -> list[str]:
    """Write PTDF/LODF matrices as CSV files for debugging; returns paths."""
    import csv
    import os
    os.makedirs(directory, exist_ok=True)
    paths = []
    bus_names = [b.name for b in net.buses]
    br_names = [b.name for b in net.branches]
    for name, matrix, cols in (("ptdf", ptdf.matrix, bus_names),
                               ("lodf", lodf.matrix, br_names)):
        path = os.path.join(directory, f"{name}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["branch"] + cols)
            for i, row in enumerate(matrix):
                w.writerow([br_names[i]] + [f"{v:.10g}" for v in row])
        paths.append(path)
    return paths
