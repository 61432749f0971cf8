"""Contingency ranking and post-contingency overload screening.

Contingencies are ordered by a quadratic overload performance index: the
sum over monitored branches of squared fractional overload of the estimated
post-contingency flow.  Screening keeps the contingencies whose estimated
flows actually exceed a rating; in the DC model those estimates coincide
with full re-solves, so screening with distribution factors loses nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Network
from .sensitivity import LodfMatrix


@dataclass(frozen=True)
class RankedContingency:
    branch: int
    severity: float       # >= 0; +inf marks islanding outages


@dataclass(frozen=True)
class Violation:
    branch: int           # monitored branch
    flow_mw: float        # estimated post-contingency flow
    rating_mw: float


@dataclass(frozen=True)
class ViolationList:
    """Critical contingencies and their overloaded monitored branches."""
    entries: dict         # contingency branch id -> tuple[Violation, ...]
    snapshot: str

    @property
    def e_v(self) -> list[int]:
        return sorted(self.entries)

    def to_dict(self, net: Network) -> dict:
        return {
            net.branches[k].name: [
                {"branch": net.branches[v.branch].name,
                 "flow_mw": v.flow_mw, "rating_mw": v.rating_mw}
                for v in vs]
            for k, vs in sorted(self.entries.items())
        }


def _post_contingency_matrix(net: Network, flows: np.ndarray,
                             lodf: LodfMatrix) -> np.ndarray:
    """f_c[l, k]: flow on l after outage of k (exact in the DC model)."""
    fc = flows[:, None] + lodf.matrix * flows[None, :]
    np.fill_diagonal(fc, 0.0)
    return fc


def rank_contingencies(net: Network, flows: np.ndarray,
                       lodf: LodfMatrix) -> list[RankedContingency]:
    """All in-service branches ordered by severity (ties by branch id).

    Islanding outages carry +inf severity so they surface at the top, but
    they have no distribution factors and are excluded from screening.
    """
    flows = np.asarray(flows, dtype=float)
    live = net.branch_in_service
    fc = _post_contingency_matrix(net, flows, lodf)
    util = np.abs(fc) / net.branch_rating[:, None]
    util[~live, :] = 0.0
    over = np.clip(util - 1.0, 0.0, None)
    severity = np.sum(over * over, axis=0)
    out = []
    for b in net.in_service_ids():
        s = math.inf if b in lodf.undefined_outages else float(severity[b])
        out.append(RankedContingency(branch=b, severity=s))
    out.sort(key=lambda r: (-r.severity, r.branch))
    return out


def select_top_fraction(ranked: list[RankedContingency],
                        fraction: float = 0.30) -> list[RankedContingency]:
    """The ceil(fraction * N) most severe contingencies."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    count = math.ceil(fraction * len(ranked))
    return list(ranked[:count])


def screen_post_contingency(net: Network, flows: np.ndarray, lodf: LodfMatrix,
                            contingencies, rating_factor: float = 1.0,
                            tol: float = 1e-9) -> ViolationList:
    """Overload check for each candidate contingency.

    Monitored set: every in-service branch other than the outaged one.
    A violation is |post-contingency flow| > rating_factor * rating.
    """
    flows = np.asarray(flows, dtype=float)
    ids = []
    for c in contingencies:
        b = c.branch if isinstance(c, RankedContingency) else net.branch_index(c)
        if b in lodf.undefined_outages:
            raise ValueError(f"islanding outage {net.branches[b].name} cannot be "
                             "screened with distribution factors")
        ids.append(b)
    live = net.branch_in_service
    entries = {}
    for k in sorted(set(ids)):
        fc = flows + lodf.matrix[:, k] * flows[k]
        fc[k] = 0.0
        limit = rating_factor * net.branch_rating
        bad = np.flatnonzero(live & (np.abs(fc) > limit + tol))
        if bad.size:
            entries[k] = tuple(Violation(branch=int(l), flow_mw=float(fc[l]),
                                         rating_mw=float(net.branch_rating[l]))
                               for l in bad)
    return ViolationList(entries=entries, snapshot=net.fingerprint())
