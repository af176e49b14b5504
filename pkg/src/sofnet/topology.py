"""Topology files and synthetic topologies.

Text format, one directive per line (``#`` starts a comment)::

    node <id> <vm|switch> <setup_cost> [<capacity> <load>]
    edge <u> <v> <connection_cost> [<capacity> <load>]
    source <id>
    dest <id>
    chain <len>

Node ids that parse as integers become ints.  An edge may only mention
declared nodes.  JSON files carry the same content::

    {"nodes": [{"id": 0, "role": "vm", "setup": 1.0, "capacity": 10, "load": 0}],
     "edges": [{"u": 0, "v": 1, "cost": 2.0}],
     "sources": [0], "dests": [1], "chain": 1}
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import networkx as nx

from .core import SWITCH, VM, Network, SofInstance, element_cost, node_key, parse_node, sorted_nodes


class TopologyError(ValueError):
    pass


@dataclass
class Topology:
    network: Network
    sources: list = field(default_factory=list)
    dests: list = field(default_factory=list)
    chain: Optional[int] = None

    def instance(self, chain: Optional[int] = None) -> SofInstance:
        C = chain if chain is not None else self.chain
        if C is None:
            raise TopologyError("no chain length given")
        return SofInstance(self.network, self.sources, self.dests, C)


def _num(tok: str, what: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise TopologyError(f"line {line}: {what} must be a number, got {tok!r}") from None


def parse_text(text: str) -> Topology:
    net = Network()
    topo = Topology(net)
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0].lower()
        if kind == "node":
            if len(tok) not in (4, 6):
                raise TopologyError(f"line {no}: expected 'node <id> <vm|switch> <setup_cost> [capacity load]'")
            role = tok[2].lower()
            if role not in (VM, SWITCH):
                raise TopologyError(f"line {no}: node role must be vm or switch, got {tok[2]!r}")
            nid = parse_node(tok[1])
            if nid in net:
                raise TopologyError(f"line {no}: node {nid} declared twice")
            cap = load = None
            if len(tok) == 6:
                cap, load = _num(tok[4], "capacity", no), _num(tok[5], "load", no)
            try:
                net.add_node(nid, role, _num(tok[3], "setup cost", no), cap, load)
            except ValueError as exc:
                raise TopologyError(f"line {no}: {exc}") from None
        elif kind == "edge":
            if len(tok) not in (4, 6):
                raise TopologyError(f"line {no}: expected 'edge <u> <v> <connection_cost> [capacity load]'")
            u, v = parse_node(tok[1]), parse_node(tok[2])
            for x in (u, v):
                if x not in net:
                    raise TopologyError(f"line {no}: edge mentions undeclared node {x}")
            cap = load = None
            if len(tok) == 6:
                cap, load = _num(tok[4], "capacity", no), _num(tok[5], "load", no)
            try:
                net.add_edge(u, v, _num(tok[3], "connection cost", no), cap, load)
            except ValueError as exc:
                raise TopologyError(f"line {no}: {exc}") from None
        elif kind in ("source", "dest"):
            if len(tok) != 2:
                raise TopologyError(f"line {no}: expected '{kind} <id>'")
            nid = parse_node(tok[1])
            if nid not in net:
                raise TopologyError(f"line {no}: {kind} {nid} is not a declared node")
            (topo.sources if kind == "source" else topo.dests).append(nid)
        elif kind == "chain":
            if len(tok) != 2 or not tok[1].isdigit():
                raise TopologyError(f"line {no}: expected 'chain <len>'")
            topo.chain = int(tok[1])
        else:
            raise TopologyError(f"line {no}: unknown directive {tok[0]!r}")
    return topo


_NODE_KEYS = {"id", "role", "setup", "capacity", "load"}
_EDGE_KEYS = {"u", "v", "cost", "capacity", "load"}
_TOP_KEYS = {"nodes", "edges", "sources", "dests", "chain"}


def parse_json(data) -> Topology:
    if isinstance(data, str):
        data = json.loads(data)
    if not isinstance(data, dict):
        raise TopologyError("JSON topology must be an object")
    bad = set(data) - _TOP_KEYS
    if bad:
        raise TopologyError(f"unknown keys {sorted(bad)}")
    net = Network()
    try:
        for n in data.get("nodes", []):
            if set(n) - _NODE_KEYS:
                raise TopologyError(f"unknown node keys {sorted(set(n) - _NODE_KEYS)}")
            role = n.get("role", SWITCH)
            if role not in (VM, SWITCH):
                raise TopologyError(f"node {n.get('id')}: role must be vm or switch")
            net.add_node(n["id"], role, float(n.get("setup", 0.0)), n.get("capacity"), n.get("load"))
        for e in data.get("edges", []):
            if set(e) - _EDGE_KEYS:
                raise TopologyError(f"unknown edge keys {sorted(set(e) - _EDGE_KEYS)}")
            for x in (e["u"], e["v"]):
                if x not in net:
                    raise TopologyError(f"edge mentions undeclared node {x}")
            net.add_edge(e["u"], e["v"], float(e["cost"]), e.get("capacity"), e.get("load"))
    except KeyError as exc:
        raise TopologyError(f"missing field {exc}") from None
    except TopologyError:
        raise
    except (TypeError, ValueError) as exc:
        raise TopologyError(str(exc)) from None
    topo = Topology(net, list(data.get("sources", [])), list(data.get("dests", [])), data.get("chain"))
    for x in topo.sources + topo.dests:
        if x not in net:
            raise TopologyError(f"source/destination {x} is not a declared node")
    return topo


def load_topology(path) -> Topology:
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        return parse_json(text)
    return parse_text(text)


def _f(x) -> str:
    return repr(float(x))


def dump_text(topo: Topology) -> str:
    net = topo.network
    g = net.graph
    out = []
    for n in net.nodes:
        d = g.nodes[n]
        line = f"node {n} {d['role']} {_f(d['setup_cost'])}"
        if d.get("capacity") is not None:
            line += f" {_f(d['capacity'])} {_f(d.get('load') or 0)}"
        out.append(line)
    for u, v, d in sorted(g.edges(data=True), key=lambda t: (node_key(t[0]), node_key(t[1]))):
        line = f"edge {u} {v} {_f(d['cost'])}"
        if d.get("capacity") is not None:
            line += f" {_f(d['capacity'])} {_f(d.get('load') or 0)}"
        out.append(line)
    out += [f"source {s}" for s in sorted_nodes(topo.sources)]
    out += [f"dest {d}" for d in sorted_nodes(topo.dests)]
    if topo.chain is not None:
        out.append(f"chain {topo.chain}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorParams:
    nodes: int
    edges: int
    data_centers: int
    vms: int = 25
    vms_per_dc: Optional[int] = None  # when set, overrides ``vms``
    link_capacity: float = 100.0
    vm_capacity: float = 100.0
    random_load: bool = True  # usage uniform in (0, 1); zero otherwise

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("need at least 2 nodes")
        if not 1 <= self.data_centers <= self.nodes:
            raise ValueError("data centers must be between 1 and the node count")
        if self.edges < self.nodes - 1:
            raise ValueError("too few edges for a connected graph")
        if self.edges > self.nodes * (self.nodes - 1) // 2:
            raise ValueError("too many edges for a simple graph")


PRESETS = {
    "softlayer": GeneratorParams(27, 49, 17),
    "cogent": GeneratorParams(190, 260, 40),
    "inet": GeneratorParams(5000, 10000, 2000),
}


def generate_topology(params: GeneratorParams, seed: int = 0) -> Network:
    """Preferential-attachment backbone plus random links, with VMs at data centers.

    Access nodes are ``0 .. nodes-1``.  Each VM is a separate node
    (``nodes, nodes+1, ...``) joined by one zero-load link to a randomly
    chosen data center.  Link and VM costs come from ``element_cost`` at a
    load of ``usage * capacity``.  The graph attributes ``access``,
    ``data_centers`` and ``vm_host`` record the layout.
    """
    rng = random.Random(seed)
    n = params.nodes
    g = nx.barabasi_albert_graph(n, 1, seed=rng.randrange(2**32)) if n > 2 else nx.path_graph(n)
    nodes = list(range(n))
    # each node appears degree + 1 times, so a uniform pick is preferential
    pool = nodes + [x for e in g.edges() for x in e]
    while g.number_of_edges() < params.edges:
        a = rng.choice(pool)
        b = rng.randrange(n)
        if a == b or g.has_edge(a, b):
            continue
        g.add_edge(a, b)
        pool += [a, b]

    net = Network()
    lc = params.link_capacity
    for x in nodes:
        net.add_node(x, SWITCH, 0.0)
    for a, b in sorted(g.edges()):
        a, b = min(a, b), max(a, b)
        load = rng.random() * lc if params.random_load else 0.0
        net.add_edge(a, b, element_cost(load, lc), lc, load)
    dcs = sorted(rng.sample(nodes, params.data_centers))
    if params.vms_per_dc is not None:
        hosts = [dc for dc in dcs for _ in range(params.vms_per_dc)]
    else:
        hosts = [rng.choice(dcs) for _ in range(params.vms)]
    vc = params.vm_capacity
    vm_host = {}
    for i, dc in enumerate(hosts):
        vid = n + i
        load = rng.random() * vc if params.random_load else 0.0
        net.add_node(vid, VM, element_cost(load, vc), vc, load)
        net.add_edge(vid, dc, 0.0, lc, 0.0)
        vm_host[vid] = dc
    net.graph.graph.update({"access": nodes, "data_centers": dcs, "vm_host": vm_host})
    return net


def access_nodes(net: Network) -> list:
    return list(net.graph.graph.get("access") or [n for n in net.nodes if not net.is_vm(n)])


def sample_instance(net: Network, n_sources: int, n_dests: int, chain: int, rng: random.Random) -> SofInstance:
    """Sources and destinations drawn from access nodes, disjoint."""
    pool = sorted_nodes(access_nodes(net))
    if n_sources + n_dests > len(pool):
        raise ValueError(f"{n_sources} sources and {n_dests} destinations exceed {len(pool)} access nodes")
    picked = rng.sample(pool, n_sources + n_dests)
    return SofInstance(net, picked[:n_sources], picked[n_sources:], chain)


def scale_setup(net: Network, factor: float) -> Network:
    return net.with_costs(setup_costs={v: net.setup(v) * factor for v in net.vms})
