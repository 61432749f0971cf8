"""Network case model: ingestion, validation, and immutable outage snapshots.

A :class:`Network` is a value object. ``apply_outage`` returns a new snapshot
and never mutates its input, so snapshots can be shared freely across
threads and long-lived references (flow states, sensitivity matrices) can
pin the exact snapshot they were derived from via ``fingerprint()``.

Units: branch flows, ratings, generation and demand are in MW; branch
susceptances are per-unit on ``mva_base``.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BranchStateError, CaseFormatError, UnknownBranchError

BALANCE_TOL = 1e-6
DEFAULT_SHED_COST = 10_000.0


@dataclass(frozen=True)
class Bus:
    id: int                 # contiguous internal index
    name: str               # original identifier from the case file
    kind: str = "transit"   # generator-attached | load-attached | both | transit


@dataclass(frozen=True)
class Branch:
    id: int
    name: str
    from_bus: int
    to_bus: int
    susceptance: float      # per-unit on mva_base
    rating: float           # MW, thermal limit f_max
    in_service: bool = True

    @property
    def min_flow(self) -> float:
        # symmetric thermal limits
        return -self.rating


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p: float                # current output G_o, MW
    p_min: float
    p_max: float
    cost_a: float           # $        fixed
    cost_b: float           # $/MW     linear
    cost_c: float           # $/MW^2   quadratic (>= 0)

    def cost_at(self, output: float) -> float:
        return self.cost_a + self.cost_b * output + self.cost_c * output * output

    def marginal_at(self, output: float) -> float:
        return self.cost_b + 2.0 * self.cost_c * output


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    p: float                # current demand L_o, MW
    p_min: float
    p_max: float
    shed_cost: float        # $/MW


@dataclass(frozen=True)
class Finding:
    severity: str           # "fatal" | "warning" | "info"
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    components: int
    imbalance_mw: float
    gen_scaling: float
    findings: tuple[Finding, ...] = ()

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "components": self.components,
            "imbalance_mw": self.imbalance_mw,
            "gen_scaling": self.gen_scaling,
            "findings": [f.__dict__ for f in self.findings],
        }


class Network:
    """Immutable-by-convention snapshot of the grid.

    Construction precomputes the array views used by the numeric modules
    (per-branch endpoint/rating arrays, per-bus injections). Do not mutate
    the tuples or arrays; derive new snapshots with :func:`apply_outage`.
    """

    def __init__(self, buses, branches, generators, loads, mva_base=100.0,
                 reference_bus=None, gen_scaling=1.0):
        self.buses: tuple[Bus, ...] = tuple(buses)
        self.branches: tuple[Branch, ...] = tuple(branches)
        self.generators: tuple[Generator, ...] = tuple(generators)
        self.loads: tuple[Load, ...] = tuple(loads)
        self.mva_base = float(mva_base)
        self.gen_scaling = float(gen_scaling)
        if reference_bus is None:
            if not self.generators:
                raise CaseFormatError("network has no generators; cannot pick a reference bus")
            reference_bus = self.generators[0].bus
        self.reference_bus = int(reference_bus)
        self._check()
        self._derive()

    # -- construction helpers -------------------------------------------------

    def _check(self) -> None:
        n = len(self.buses)
        ids = [b.id for b in self.buses]
        if ids != list(range(n)):
            raise CaseFormatError("bus ids must be contiguous 0..n-1 after remap")
        if not self.branches:
            raise CaseFormatError("no branches")
        for br in self.branches:
            if br.from_bus == br.to_bus:
                raise CaseFormatError(f"branch {br.name} connects a bus to itself")
            if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
                raise CaseFormatError(f"branch {br.name} references an unknown bus")
            if not br.rating > 0:
                raise CaseFormatError(f"branch {br.name} has no positive rating; "
                                      "ratings are mandatory")
            if br.susceptance <= 0:
                raise CaseFormatError(f"branch {br.name} needs a positive susceptance")
        for g in self.generators:
            if not (g.p_min - BALANCE_TOL <= g.p <= g.p_max + BALANCE_TOL):
                raise CaseFormatError(f"generator at bus {g.bus}: output outside limits")
            if g.cost_c < 0:
                raise CaseFormatError(f"generator at bus {g.bus}: negative quadratic cost")
        max_marginal = max((g.marginal_at(g.p_max) for g in self.generators), default=0.0)
        for ld in self.loads:
            if not (0 <= ld.p_min <= ld.p + BALANCE_TOL and ld.p <= ld.p_max + BALANCE_TOL):
                raise CaseFormatError(f"load at bus {ld.bus}: demand outside limits")
            if ld.shed_cost < 2.0 * max_marginal:
                raise CaseFormatError(
                    f"load at bus {ld.bus}: shed cost {ld.shed_cost:.2f} $/MW is below "
                    f"twice the maximum generator marginal cost; use at least "
                    f"{2.0 * max_marginal:.2f} $/MW")

    def _derive(self) -> None:
        self.n_buses = len(self.buses)
        self.branch_from = np.array([b.from_bus for b in self.branches], dtype=np.int32)
        self.branch_to = np.array([b.to_bus for b in self.branches], dtype=np.int32)
        self.branch_susceptance = np.array([b.susceptance for b in self.branches])
        self.branch_rating = np.array([b.rating for b in self.branches])
        self.branch_in_service = np.array([b.in_service for b in self.branches], dtype=bool)
        self._by_name = {}
        for br in self.branches:
            self._by_name.setdefault(br.name, br.id)
        self._fingerprint: str | None = None

    # -- lookups --------------------------------------------------------------

    def branch_index(self, key) -> int:
        """Resolve a branch by internal id or by name (e.g. ``"15-33"``)."""
        if isinstance(key, (int, np.integer)):
            if 0 <= int(key) < len(self.branches):
                return int(key)
            raise UnknownBranchError(f"no branch with id {key}")
        if key in self._by_name:
            return self._by_name[key]
        # accept the reversed "to-from" spelling
        if isinstance(key, str) and "-" in key:
            a, _, b = key.partition("-")
            alt = f"{b}-{a}"
            if alt in self._by_name:
                return self._by_name[alt]
        raise UnknownBranchError(f"no branch named {key!r}")

    def in_service_ids(self) -> list[int]:
        return [b.id for b in self.branches if b.in_service]

    def injections(self) -> np.ndarray:
        """Per-bus net injection in MW (generation minus demand)."""
        inj = np.zeros(self.n_buses)
        for g in self.generators:
            inj[g.bus] += g.p
        for ld in self.loads:
            inj[ld.bus] -= ld.p
        return inj

    def total_demand(self) -> float:
        return float(sum(ld.p for ld in self.loads))

    def total_generation(self) -> float:
        return float(sum(g.p for g in self.generators))

    def fingerprint(self) -> str:
        if self._fingerprint is None:
            blob = json.dumps(to_native_dict(self), sort_keys=True).encode()
            self._fingerprint = hashlib.sha256(blob).hexdigest()[:16]
        return self._fingerprint

    def _replace(self, **kw) -> "Network":
        args = dict(buses=self.buses, branches=self.branches,
                    generators=self.generators, loads=self.loads,
                    mva_base=self.mva_base, reference_bus=self.reference_bus,
                    gen_scaling=self.gen_scaling)
        args.update(kw)
        return Network(**args)


# -- connectivity ---------------------------------------------------------


def connected_components(net: Network, exclude: frozenset = frozenset()) -> list[list[int]]:
    """Connected components of the in-service subgraph, minus ``exclude`` branches."""
    adj: list[list[int]] = [[] for _ in range(net.n_buses)]
    for br in net.branches:
        if br.in_service and br.id not in exclude:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
    seen = [False] * net.n_buses
    comps = []
    for s in range(net.n_buses):
        if seen[s]:
            continue
        comp = [s]
        seen[s] = True
        stack = [s]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.append(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def bridges(net: Network) -> frozenset[int]:
    """Branch ids whose single outage disconnects the in-service subgraph.

    Iterative Tarjan lowpoint search; parallel branches are never bridges.
    """
    n = net.n_buses
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for br in net.branches:
        if br.in_service:
            adj[br.from_bus].append((br.to_bus, br.id))
            adj[br.to_bus].append((br.from_bus, br.id))
    disc = [-1] * n
    low = [0] * n
    out: set[int] = set()
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        stack = [(root, -1, iter(adj[root]))]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            u, pedge, it = stack[-1]
            advanced = False
            for v, eid in it:
                if eid == pedge:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, eid, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        out.add(pedge)
    return frozenset(out)


# -- operations -----------------------------------------------------------


def validate(net: Network) -> ValidationReport:
    """Non-throwing health check: connectivity, balance, base-case limits."""
    findings: list[Finding] = []
    comps = connected_components(net)
    if len(comps) > 1:
        findings.append(Finding("fatal", "islands",
                                f"in-service subgraph has {len(comps)} components"))
    imbalance = net.total_generation() - net.total_demand()
    if abs(imbalance) > BALANCE_TOL:
        findings.append(Finding("fatal", "imbalance",
                                f"generation-demand imbalance {imbalance:.6f} MW"))
    if net.gen_scaling != 1.0:
        findings.append(Finding("info", "gen-scaled",
                                f"generator outputs scaled by {net.gen_scaling:.6f} "
                                "at ingestion to match demand"))
    for g in net.generators:
        if not (g.p_min - BALANCE_TOL <= g.p <= g.p_max + BALANCE_TOL):
            findings.append(Finding("fatal", "gen-limit",
                                    f"generator at bus {g.bus} outside its limits"))
    if len(comps) == 1:
        try:
            from .sensitivity import dc_power_flow
            flows = dc_power_flow(net, net.injections())
            over = np.flatnonzero(np.abs(flows) > net.branch_rating + BALANCE_TOL)
            for l in over:
                if net.branches[l].in_service:
                    findings.append(Finding(
                        "warning", "base-overload",
                        f"branch {net.branches[l].name} at "
                        f"{abs(flows[l]):.2f}/{net.branch_rating[l]:.2f} MW"))
        except Exception as exc:  # singular systems etc. are reported, not raised
            findings.append(Finding("warning", "dc-flow-failed", str(exc)))
    ok = not any(f.severity == "fatal" for f in findings)
    return ValidationReport(ok=ok, components=len(comps), imbalance_mw=float(imbalance),
                            gen_scaling=net.gen_scaling, findings=tuple(findings))


def apply_outage(net: Network, branch) -> Network:
    """Return a new snapshot with one more branch out of service."""
    idx = net.branch_index(branch)
    br = net.branches[idx]
    if not br.in_service:
        raise BranchStateError(f"branch {br.name} is already out of service")
    branches = list(net.branches)
    branches[idx] = replace(br, in_service=False)
    return net._replace(branches=tuple(branches))


# -- native JSON format ----------------------------------------------------


def to_native_dict(net: Network) -> dict:
    return {
        "mva_base": net.mva_base,
        "reference_bus": net.buses[net.reference_bus].name,
        "buses": [{"id": b.name} for b in net.buses],
        "branches": [
            {"name": b.name,
             "from": net.buses[b.from_bus].name,
             "to": net.buses[b.to_bus].name,
             "susceptance": b.susceptance,
             "rating": b.rating,
             "in_service": b.in_service}
            for b in net.branches
        ],
        "generators": [
            {"bus": net.buses[g.bus].name, "p": g.p, "p_min": g.p_min, "p_max": g.p_max,
             "cost": [g.cost_a, g.cost_b, g.cost_c]}
            for g in net.generators
        ],
        "loads": [
            {"bus": net.buses[ld.bus].name, "p": ld.p, "p_min": ld.p_min,
             "p_max": ld.p_max, "shed_cost": ld.shed_cost}
            for ld in net.loads
        ],
    }


def serialize_case(net: Network) -> str:
    return json.dumps(to_native_dict(net), indent=1)


def _balance(generators: list[Generator], total_demand: float) -> tuple[list[Generator], float]:
    """Scale generator outputs proportionally so generation matches demand."""
    total_gen = sum(g.p for g in generators)
    if abs(total_gen - total_demand) <= BALANCE_TOL:
        return generators, 1.0
    if total_gen <= 0:
        raise CaseFormatError("total generation is zero but demand is not")
    factor = total_demand / total_gen
    scaled = []
    for g in generators:
        p = g.p * factor
        if not (g.p_min - BALANCE_TOL <= p <= g.p_max + BALANCE_TOL):
            raise CaseFormatError(
                f"cannot balance case: scaled output {p:.2f} MW violates limits of "
                f"generator at bus {g.bus}")
        scaled.append(replace(g, p=p))
    return scaled, factor


def _from_native(doc: dict, default_shed_cost: float = DEFAULT_SHED_COST) -> Network:
    for key in ("buses", "branches", "generators", "loads"):
        if key not in doc:
            raise CaseFormatError(f"missing top-level key {key!r}")
    if not doc["branches"]:
        raise CaseFormatError("no branches")
    bus_map: dict[str, int] = {}
    buses: list[Bus] = []
    for i, b in enumerate(doc["buses"]):
        name = str(b["id"])
        if name in bus_map:
            raise CaseFormatError(f"duplicate bus id {name}", locus=f"buses[{i}]")
        bus_map[name] = i
        buses.append(Bus(id=i, name=name))

    def bus_of(raw, locus):
        key = str(raw)
        if key not in bus_map:
            raise CaseFormatError(f"unknown bus {key}", locus=locus)
        return bus_map[key]

    branches = []
    name_counts: dict[str, int] = {}
    for i, row in enumerate(doc["branches"]):
        locus = f"branches[{i}]"
        if "rating" not in row or row["rating"] is None:
            raise CaseFormatError("branch rating is mandatory", locus=locus)
        f = bus_of(row["from"], locus)
        t = bus_of(row["to"], locus)
        base = row.get("name") or f"{row['from']}-{row['to']}"
        name_counts[base] = name_counts.get(base, 0) + 1
        name = base if name_counts[base] == 1 else f"{base}:{name_counts[base]}"
        branches.append(Branch(
            id=i, name=name, from_bus=f, to_bus=t,
            susceptance=float(row["susceptance"]),
            rating=float(row["rating"]),
            in_service=bool(row.get("in_service", True))))
    generators = []
    for i, row in enumerate(doc["generators"]):
        locus = f"generators[{i}]"
        cost = row.get("cost", [0.0, 0.0, 0.0])
        if len(cost) != 3:
            raise CaseFormatError("generator cost must be [a, b, c]", locus=locus)
        p = float(row["p"])
        generators.append(Generator(
            id=i, bus=bus_of(row["bus"], locus), p=p,
            p_min=float(row.get("p_min", 0.0)),
            p_max=float(row.get("p_max", p)),
            cost_a=float(cost[0]), cost_b=float(cost[1]), cost_c=float(cost[2])))
    loads = []
    for i, row in enumerate(doc["loads"]):
        locus = f"loads[{i}]"
        p = float(row["p"])
        loads.append(Load(
            id=i, bus=bus_of(row["bus"], locus), p=p,
            p_min=float(row.get("p_min", 0.0)),
            p_max=float(row.get("p_max", p)),
            shed_cost=float(row.get("shed_cost", default_shed_cost))))
    generators, scaling = _balance(generators, sum(ld.p for ld in loads))
    ref = None
    if doc.get("reference_bus") is not None:
        ref = bus_of(doc["reference_bus"], "reference_bus")
    return Network(buses, branches, generators, loads,
                   mva_base=float(doc.get("mva_base", 100.0)),
                   reference_bus=ref, gen_scaling=scaling)


# -- MATPOWER-style text ----------------------------------------------------

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.S)


def _parse_matrices(text: str) -> dict[str, list[list[float]]]:
    body = "\n".join(line.split("%", 1)[0] for line in text.splitlines())
    out = {}
    for m in _MATRIX_RE.finditer(body):
        rows = []
        for lineno, raw in enumerate(m.group(2).split(";"), start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rows.append([float(tok) for tok in raw.replace(",", " ").split()])
            except ValueError as exc:
                raise CaseFormatError(f"bad numeric row: {exc}",
                                      locus=f"mpc.{m.group(1)} row {lineno}") from None
        out[m.group(1)] = rows
    return out


def _from_matpower(text: str, default_shed_cost: float = DEFAULT_SHED_COST) -> Network:
    mats = _parse_matrices(text)
    if "bus" not in mats or "branch" not in mats or "gen" not in mats:
        raise CaseFormatError("matpower-like text needs mpc.bus, mpc.branch and mpc.gen")
    base = 100.0
    m_base = re.search(r"mpc\.baseMVA\s*=\s*([\d.eE+-]+)\s*;", text)
    if m_base:
        base = float(m_base.group(1))

    doc: dict = {"mva_base": base, "buses": [], "branches": [],
                 "generators": [], "loads": []}
    ref_orig = None
    for i, row in enumerate(mats["bus"]):
        if len(row) < 3:
            raise CaseFormatError("bus row too short", locus=f"mpc.bus row {i + 1}")
        orig = int(row[0])
        doc["buses"].append({"id": orig})
        if int(row[1]) == 3:
            ref_orig = orig
        pd = row[2]
        if pd > 0:
            doc["loads"].append({"bus": orig, "p": pd})
    for i, row in enumerate(mats["branch"]):
        locus = f"mpc.branch row {i + 1}"
        if len(row) < 6:
            raise CaseFormatError("branch row too short", locus=locus)
        x, rate_a = row[3], row[5]
        status = row[10] if len(row) > 10 else 1.0
        if x == 0:
            raise CaseFormatError("branch reactance is zero", locus=locus)
        if rate_a <= 0:
            raise CaseFormatError("branch rating (rateA) is mandatory", locus=locus)
        doc["branches"].append({
            "from": int(row[0]), "to": int(row[1]),
            "susceptance": 1.0 / abs(x), "rating": rate_a,
            "in_service": status > 0})
    gencost = mats.get("gencost", [])
    for i, row in enumerate(mats["gen"]):
        locus = f"mpc.gen row {i + 1}"
        if len(row) < 10:
            raise CaseFormatError("gen row too short", locus=locus)
        status = row[7]
        if status <= 0:
            continue
        cost = [0.0, 10.0, 0.01]  # placeholder economics when gencost is absent
        if i < len(gencost):
            c = gencost[i]
            if int(c[0]) != 2:
                raise CaseFormatError("only polynomial gencost (model 2) is supported",
                                      locus=f"mpc.gencost row {i + 1}")
            ncoef = int(c[3])
            coeffs = c[4:4 + ncoef]          # highest order first
            padded = [0.0] * (3 - len(coeffs)) + list(coeffs)
            if len(padded) > 3:
                raise CaseFormatError("gencost order above quadratic is unsupported",
                                      locus=f"mpc.gencost row {i + 1}")
            cost = [padded[2], padded[1], padded[0]]
        doc["generators"].append({
            "bus": int(row[0]), "p": row[1],
            "p_min": row[9], "p_max": row[8], "cost": cost})
    if ref_orig is not None:
        doc["reference_bus"] = ref_orig
    return _from_native(doc, default_shed_cost)


def parse_case(case_text: str, format: str = "auto",
               default_shed_cost: float = DEFAULT_SHED_COST) -> Network:
    """Parse a case file into a :class:`Network`.

    ``format`` is one of ``native-json``, ``matpower-like`` or ``auto``
    (sniffs JSON first).
    """
    if format == "auto":
        stripped = case_text.lstrip()
        format = "native-json" if stripped.startswith("{") else "matpower-like"
    if format == "native-json":
        try:
            doc = json.loads(case_text)
        except json.JSONDecodeError as exc:
            raise CaseFormatError(f"invalid JSON: {exc.msg}",
                                  locus=f"line {exc.lineno}") from None
        return _from_native(doc, default_shed_cost)
    if format == "matpower-like":
        return _from_matpower(case_text, default_shed_cost)
    raise CaseFormatError(f"unknown case format {format!r}")


def load_case(path, default_shed_cost: float = DEFAULT_SHED_COST) -> Network:
    with open(path) as fh:
        return parse_case(fh.read(), default_shed_cost=default_shed_cost)
