"""Exact reference solutions: an enumeration oracle and an LP-file exporter.

The oracle fixes which VNF index every VM may run, builds the layered
digraph for that assignment and solves a Steiner arborescence exactly.  The
exporter writes the integer program in CPLEX-LP format for an external
MILP solver.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx

from .core import (
    InfeasibleError,
    ServiceForest,
    SofInstance,
    forest_cost,
    sorted_nodes,
    trace_sources,
)
from .steiner import steiner_exact

LAYER_ROOT = ("~layered", "root")


# ---------------------------------------------------------------------------
# layered graph


@dataclass
class LayeredGraph:
    graph: nx.DiGraph
    root: tuple
    terminals: list
    chain_len: int
    assignment: dict  # VM -> VNF index it may run


def build_layered_graph(instance: SofInstance, assignment: dict) -> LayeredGraph:
    """Layer ``i`` holds traffic that has passed f_1..f_i.

    ``assignment`` maps VMs to the VNF index they may run; every other VM
    only forwards.
    """
    net = instance.network
    C = instance.chain_len
    g = nx.DiGraph()
    for layer in range(C + 1):
        for n in net.nodes:
            g.add_node((n, layer))
        for a, b, c in net.edges():
            g.add_edge((a, layer), (b, layer), cost=c)
            g.add_edge((b, layer), (a, layer), cost=c)
    for v, i in assignment.items():
        if not 1 <= i <= C:
            raise ValueError(f"VNF index {i} out of range at {v}")
        if not net.is_vm(v):
            raise ValueError(f"{v} is not a VM")
        g.add_edge((v, i - 1), (v, i), cost=net.setup(v))
    for s in sorted_nodes(instance.sources):
        g.add_edge(LAYER_ROOT, (s, 0), cost=instance.source_cost(s))
    terms = [(d, C) for d in sorted_nodes(instance.destinations)]
    return LayeredGraph(g, LAYER_ROOT, terms, C, dict(assignment))


# ---------------------------------------------------------------------------
# oracle


@dataclass(frozen=True)
class OracleLimits:
    max_vms: int = 8
    max_chain: int = 3
    max_dests: int = 4


class LimitError(ValueError):
    """The instance is larger than the enumeration guard allows."""


def _assignments(vms: list, C: int):
    """Every map VMs -> {1..C} that uses each index at least once."""
    for labels in itertools.product(range(1, C + 1), repeat=len(vms)):
        if len(set(labels)) == C:
            yield dict(zip(vms, labels))


def oracle_optimal(instance: SofInstance, limits: OracleLimits = OracleLimits()) -> ServiceForest:
    """Minimum-cost service forest by exhaustive VNF assignment.

    Giving every VM a label loses nothing: an arborescence pays for a
    transition arc only when it uses it.
    """
    net = instance.network
    vms = net.vms
    C = instance.chain_len
    D = sorted_nodes(instance.destinations)
    if len(vms) > limits.max_vms or C > limits.max_chain or len(D) > limits.max_dests:
        raise LimitError(
            f"oracle limited to |M|<={limits.max_vms}, |C|<={limits.max_chain}, |D|<={limits.max_dests}; "
            f"got {len(vms)}, {C}, {len(D)}"
        )
    if not D:
        return ServiceForest(C, meta={"algorithm": "oracle", "optimum": 0.0})
    instance.check_feasible()
    if len(vms) < C:
        raise InfeasibleError(f"only {len(vms)} VMs for a chain of {C}")
    best = None
    for sigma in _assignments(vms, C):
        lg = build_layered_graph(instance, sigma)
        try:
            res = steiner_exact(lg.graph, lg.root, lg.terminals)
        except InfeasibleError:
            continue
        if best is None or res.cost < best[0] - 1e-9:
            best = (res.cost, sigma, res)
    if best is None:
        raise InfeasibleError("no assignment serves every destination")
    cost, sigma, res = best
    forest = ServiceForest(C)
    forest.arcs = {(a, b) for a, b in res.edges if a != LAYER_ROOT}
    owner = trace_sources(instance, forest.graph())
    forest.served = {d: owner.get((d, C)) for d in D}
    forest.meta.update({"algorithm": "oracle", "optimum": cost, "assignment": sigma})
    return forest


def oracle_cost(instance: SofInstance, limits: OracleLimits = OracleLimits()) -> float:
    return forest_cost(instance, oracle_optimal(instance, limits)).total


# ---------------------------------------------------------------------------
# LP export


@dataclass
class IpModel:
    objective: dict = field(default_factory=dict)  # var -> coefficient
    rows: dict = field(default_factory=dict)  # family -> list of (name, {var: coef}, sense, rhs)
    binaries: list = field(default_factory=list)
    fixed_zero: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    def counts(self) -> dict:
        return {k: len(v) for k, v in self.rows.items()}

    def variables(self) -> set:
        return set(self.binaries)


def expected_counts(n_dest: int, chain_len: int, n_nodes: int, n_edges: int) -> dict:
    D, C, V, E = n_dest, chain_len, n_nodes, n_edges
    return {
        "c1": D,
        "c2": D * C,
        "c3": D,
        "c4": D * (V - 1),
        "c5": D * C * V,
        "c6": V,
        "c7": D * (C + 1) * V,
        "c8": D * (C + 1) * E,
    }


def build_ip(instance: SofInstance) -> IpModel:
    net = instance.network
    V = net.nodes
    M = set(net.vms)
    S = set(instance.sources)
    D = sorted_nodes(instance.destinations)
    C = instance.chain_len
    nid = {n: i for i, n in enumerate(V)}
    funcs = ["S"] + [str(i) for i in range(1, C + 1)] + ["D"]
    routed = funcs[:-1]  # f_S and the chain
    chain = funcs[1:-1]
    nxt = {f: funcs[k + 1] for k, f in enumerate(funcs[:-1])}
    edges = sorted(((nid[a], nid[b], c) for a, b, c in net.edges()), key=lambda t: (min(t[:2]), max(t[:2])))
    edges = [(min(a, b), max(a, b), c) for a, b, c in edges]
    nbrs = {i: [] for i in range(len(V))}
    for a, b, _ in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)

    def gam(d, f, u):
        return f"g_d{d}_f{f}_u{u}"

    def pi(d, f, u, v):
        return f"p_d{d}_f{f}_u{u}_v{v}"

    def tau(f, u, v):
        return f"t_f{f}_u{u}_v{v}"

    def sig(f, u):
        return f"s_f{f}_u{u}"

    m = IpModel()
    m.rows = {k: [] for k in ("c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8")}
    variables = []
    zero = []
    for d in range(len(D)):
        for f in funcs:
            for u in range(len(V)):
                variables.append(gam(d, f, u))
                node = V[u]
                if (f == "S" and node not in S) or (f in chain and node not in M):
                    zero.append(gam(d, f, u))
        for f in routed:
            for a, b, _ in edges:
                variables.append(pi(d, f, a, b))
                variables.append(pi(d, f, b, a))
    for f in routed:
        for a, b, _ in edges:
            variables.append(tau(f, a, b))
    for f in chain:
        for u in range(len(V)):
            variables.append(sig(f, u))

    for f in chain:
        for u in range(len(V)):
            c = net.setup(V[u])
            if c:
                m.objective[sig(f, u)] = c
    # link cost per routed layer, including the layer before f_1
    for f in routed:
        for a, b, c in edges:
            if c:
                m.objective[tau(f, a, b)] = c

    for d in range(len(D)):
        dn = nid[D[d]]
        m.rows["c1"].append((f"c1_d{d}", {gam(d, "S", nid[s]): 1 for s in sorted_nodes(S)}, "=", 1))
        for f in chain:
            m.rows["c2"].append((f"c2_d{d}_f{f}", {gam(d, f, nid[u]): 1 for u in sorted_nodes(M)}, "=", 1))
        m.rows["c3"].append((f"c3_d{d}", {gam(d, "D", dn): 1}, "=", 1))
        for u in range(len(V)):
            if u != dn:
                m.rows["c4"].append((f"c4_d{d}_u{u}", {gam(d, "D", u): 1}, "=", 0))
        for f in chain:
            for u in range(len(V)):
                m.rows["c5"].append((f"c5_d{d}_f{f}_u{u}", {gam(d, f, u): 1, sig(f, u): -1}, "<=", 0))
    for u in range(len(V)):
        m.rows["c6"].append((f"c6_u{u}", {sig(f, u): 1 for f in chain}, "<=", 1))
    for d in range(len(D)):
        for f in routed:
            for u in range(len(V)):
                row: dict = {}
                for v in nbrs[u]:
                    row[pi(d, f, u, v)] = row.get(pi(d, f, u, v), 0) + 1
                    row[pi(d, f, v, u)] = row.get(pi(d, f, v, u), 0) - 1
                g1, g2 = gam(d, f, u), gam(d, nxt[f], u)
                row[g1] = row.get(g1, 0) - 1
                row[g2] = row.get(g2, 0) + 1
                m.rows["c7"].append((f"c7_d{d}_f{f}_u{u}", row, ">=", 0))
    for d in range(len(D)):
        for f in routed:
            for a, b, _ in edges:
                m.rows["c8"].append(
                    (f"c8_d{d}_f{f}_u{a}_v{b}", {pi(d, f, a, b): 1, pi(d, f, b, a): 1, tau(f, a, b): -1}, "<=", 0)
                )
    m.binaries = variables
    m.fixed_zero = zero
    m.manifest = {
        "nodes": {str(i): repr(n) for i, n in enumerate(V)},
        "destinations": {str(i): repr(d) for i, d in enumerate(D)},
        "functions": funcs,
        "patterns": {
            "gamma": "g_d{dest}_f{function}_u{node}",
            "pi": "p_d{dest}_f{function}_u{from}_v{to}",
            "tau": "t_f{function}_u{node}_v{node} (u < v)",
            "sigma": "s_f{function}_u{node}",
        },
        "counts": m.counts(),
        "expected_counts": expected_counts(len(D), C, len(V), len(edges)),
        "notes": "link costs are charged on f_S and every chain layer",
    }
    return m


def _fmt(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def _expr(coefs: dict) -> str:
    parts = []
    for var, c in coefs.items():
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        term = var if mag == 1 else f"{_fmt(mag)} {var}"
        parts.append(f"{sign} {term}")
    if not parts:
        return "0"
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else s


def _wrap(text: str, width: int = 200) -> str:
    out, line = [], ""
    for tok in text.split(" "):
        if len(line) + len(tok) + 1 > width:
            out.append(line)
            line = " " + tok
        else:
            line = f"{line} {tok}" if line else tok
    out.append(line)
    return "\n".join(out)


def write_lp(model: IpModel) -> str:
    lines = ["\\ service overlay forest integer program", "Minimize"]
    obj = _expr(model.objective) if model.objective else "0 " + (model.binaries[0] if model.binaries else "")
    if not model.objective and not model.binaries:
        obj = "0"
    lines.append(_wrap(" obj: " + obj))
    lines.append("Subject To")
    for fam in sorted(model.rows):
        for name, coefs, sense, rhs in model.rows[fam]:
            lines.append(_wrap(f" {name}: {_expr(coefs)} {sense} {_fmt(rhs)}"))
    if model.fixed_zero:
        lines.append("Bounds")
        for v in model.fixed_zero:
            lines.append(f" {v} = 0")
    if model.binaries:
        lines.append("Binary")
        for k in range(0, len(model.binaries), 8):
            lines.append(" " + " ".join(model.binaries[k : k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


DEFAULT_MAX_VARIABLES = 2_000_000


def export_ip(instance: SofInstance, path, max_variables: int = DEFAULT_MAX_VARIABLES) -> IpModel:
    """Write ``path`` (LP) and ``path`` with suffix ``.manifest.json``."""
    net = instance.network
    V, E = len(net.nodes), net.num_edges()
    D, C = len(instance.destinations), instance.chain_len
    approx_vars = D * (C + 2) * V + 2 * D * (C + 1) * E + (C + 1) * E + C * V
    if approx_vars > max_variables:
        raise ValueError(f"model would have about {approx_vars} variables (limit {max_variables})")
    model = build_ip(instance)
    path = Path(path)
    path.write_text(write_lp(model))
    path.with_suffix(".manifest.json").write_text(json.dumps(model.manifest, indent=2, sort_keys=True))
    return model


_ROW = re.compile(r"^\s*(c\d)_")


def count_rows(lp_text: str) -> dict:
    """Rows per constraint family, parsed back from LP text."""
    out: dict = {}
    section = None
    for line in lp_text.splitlines():
        head = line.strip().lower()
        if head in ("minimize", "subject to", "bounds", "binary", "end"):
            section = head
            continue
        if section == "subject to":
            m = _ROW.match(line)
            if m:
                out[m.group(1)] = out.get(m.group(1), 0) + 1
    return out


def solve_lp_file(path) -> float | None:
    """Optimum via HiGHS when it is installed; ``None`` otherwise."""
    try:
        import highspy
    except ImportError:
        return None
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    status = h.readModel(str(path))
    if status != highspy.HighsStatus.kOk:
        raise RuntimeError(f"HiGHS could not read {path}")
    h.run()
    if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
        return math.inf
    return h.getInfo().objective_function_value
