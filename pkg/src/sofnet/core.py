"""Problem model for service overlay forests.

A forest lives in *clone space*: every clone is a pair ``(node, layer)`` where
``layer`` counts the VNFs already applied to the stream when it reaches the
node.  Link arcs join two clones on the same layer; a VNF arc
``(v, i-1) -> (v, i)`` means VM ``v`` runs ``f_i``.  A link used on two
different layers is therefore charged twice.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Optional

import networkx as nx

VM = "vm"
SWITCH = "switch"

Node = Hashable
Clone = tuple  # (node, layer)
Arc = tuple  # (Clone, Clone)

TIGHT_TOL = 1e-9


class InfeasibleError(ValueError):
    """Raised when an instance admits no feasible service forest."""


class StructureError(ValueError):
    """Raised for references to nodes or links that do not exist."""


def node_key(x):
    """Total order over mixed node ids (ints, strings, tuples)."""
    if isinstance(x, bool):
        return (0, int(x))
    if isinstance(x, int):
        return (0, x)
    if isinstance(x, float):
        return (0, x)
    if isinstance(x, str):
        return (1, x)
    if isinstance(x, tuple):
        return (2, tuple(node_key(y) for y in x))
    return (3, repr(x))


def sorted_nodes(nodes: Iterable) -> list:
    return sorted(nodes, key=node_key)


def parse_node(token: str):
    """Node ids in text inputs are ints when they look like ints."""
    try:
        return int(token)
    except ValueError:
        return token


# ---------------------------------------------------------------------------
# cost model


@dataclass(frozen=True)
class CostModelParams:
    """Convex piecewise-linear element cost ``c(l, p)``.

    Each piece is ``slope * l - intercept * p`` and applies while ``l/p`` is at
    most the matching threshold; the last piece has no upper threshold.
    """

    thresholds: tuple = (1 / 3, 2 / 3, 9 / 10, 1.0, 11 / 10)
    slopes: tuple = (1.0, 3.0, 10.0, 70.0, 500.0, 5000.0)
    intercepts: tuple = (0.0, 2 / 3, 16 / 3, 178 / 3, 1468 / 3, 16318 / 3)

    def __post_init__(self):
        if len(self.slopes) != len(self.thresholds) + 1 or len(self.intercepts) != len(self.slopes):
            raise ValueError("need one more piece than thresholds")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must increase")
        if any(b <= a for a, b in zip(self.slopes, self.slopes[1:])):
            raise ValueError("slopes must increase")

    @classmethod
    def as_printed(cls) -> "CostModelParams":
        """Variant whose last intercept is 14318/3 (discontinuous at 11/10)."""
        return cls(intercepts=(0.0, 2 / 3, 16 / 3, 178 / 3, 1468 / 3, 14318 / 3))


DEFAULT_COST_MODEL = CostModelParams()


def element_cost(load: float, capacity: float, params: CostModelParams = DEFAULT_COST_MODEL) -> float:
    if capacity <= 0:
        raise ValueError(f"capacity must be positive, got {capacity}")
    if load < 0:
        raise ValueError(f"load must be nonnegative, got {load}")
    u = load / capacity
    piece = len(params.thresholds)
    for i, t in enumerate(params.thresholds):
        if u <= t:
            piece = i
            break
    return params.slopes[piece] * load - params.intercepts[piece] * capacity


# ---------------------------------------------------------------------------
# network


class Network:
    """Undirected graph with VM/switch roles, setup costs and link costs."""

    def __init__(self):
        self.graph = nx.Graph()

    def add_node(self, node, role=SWITCH, setup_cost=0.0, capacity=None, load=None):
        if role not in (VM, SWITCH):
            raise ValueError(f"unknown role {role!r}")
        if setup_cost < 0:
            raise ValueError(f"negative setup cost at {node}")
        if role == SWITCH and setup_cost != 0:
            raise ValueError(f"switch {node} must have setup cost 0")
        _check_cap(node, capacity, load)
        self.graph.add_node(node, role=role, setup_cost=float(setup_cost), capacity=capacity, load=load)
        return self

    def add_edge(self, u, v, cost, capacity=None, load=None):
        if cost < 0:
            raise ValueError(f"negative connection cost on ({u}, {v})")
        if u == v:
            raise ValueError(f"self-loop at {u}")
        for x in (u, v):
            if x not in self.graph:
                raise StructureError(f"edge ({u}, {v}) references unknown node {x}")
        _check_cap((u, v), capacity, load)
        self.graph.add_edge(u, v, cost=float(cost), capacity=capacity, load=load)
        return self

    # -- queries
    def __contains__(self, node) -> bool:
        return node in self.graph

    @property
    def nodes(self) -> list:
        return sorted_nodes(self.graph.nodes)

    @property
    def vms(self) -> list:
        return sorted_nodes(n for n, d in self.graph.nodes(data=True) if d["role"] == VM)

    def is_vm(self, node) -> bool:
        return self.graph.nodes[node]["role"] == VM

    def setup(self, node) -> float:
        return self.graph.nodes[node]["setup_cost"]

    def cost(self, u, v) -> float:
        return self.graph.edges[u, v]["cost"]

    def has_edge(self, u, v) -> bool:
        return self.graph.has_edge(u, v)

    def edges(self) -> Iterator[tuple]:
        for u, v, d in self.graph.edges(data=True):
            yield u, v, d["cost"]

    def neighbors(self, node) -> list:
        return sorted_nodes(self.graph.neighbors(node))

    def num_edges(self) -> int:
        return self.graph.number_of_edges()

    def copy(self) -> "Network":
        net = Network()
        net.graph = self.graph.copy()
        return net

    def with_costs(self, edge_costs: dict | None = None, setup_costs: dict | None = None) -> "Network":
        net = self.copy()
        for (u, v), c in (edge_costs or {}).items():
            net.graph.edges[u, v]["cost"] = float(c)
        for n, c in (setup_costs or {}).items():
            net.graph.nodes[n]["setup_cost"] = float(c)
        return net

    def replicate_vm(self, node, copies: int) -> list:
        """Split a host able to run ``copies`` VNFs into replica VMs.

        Replicas are joined to the original by zero-cost links and share its
        setup cost; returns the new replica ids.
        """
        if not self.is_vm(node):
            raise ValueError(f"{node} is not a VM")
        made = []
        for i in range(1, copies):
            rid = (node, "replica", i)
            self.add_node(rid, VM, self.setup(node))
            self.add_edge(node, rid, 0.0)
            made.append(rid)
        return made


def _check_cap(where, capacity, load):
    if capacity is not None and capacity <= 0:
        raise ValueError(f"capacity at {where} must be positive")
    if load is not None and load < 0:
        raise ValueError(f"load at {where} must be nonnegative")


# ---------------------------------------------------------------------------
# shortest paths


@dataclass
class PathResult:
    cost: float
    path: Optional[list]

    @property
    def found(self) -> bool:
        return self.path is not None


class GraphPaths:
    """Cached single-target Dijkstra with deterministic path recovery.

    Among all minimum-cost paths the lexicographically smallest node sequence
    (under :func:`node_key`) is returned, so every consumer that rebuilds a
    path from the same distances gets the same answer.  The graph is treated
    as undirected.
    """

    def __init__(self, graph: nx.Graph, weight: str = "cost"):
        self.graph = graph
        self._attr = weight
        self._adj = {n: sorted_nodes(graph.neighbors(n)) for n in graph.nodes}
        self._dist: dict = {}
        self._paths: dict = {}
        self._costs: dict = {}

    def weight(self, a, b) -> float:
        return self.graph.edges[a, b][self._attr]

    def __contains__(self, node) -> bool:
        return node in self.graph

    def distances_to(self, target) -> dict:
        d = self._dist.get(target)
        if d is None:
            if target not in self.graph:
                raise StructureError(f"unknown node {target}")
            d = self._compute(target)
            self._dist[target] = d
        return d

    def _compute(self, target) -> dict:
        return nx.single_source_dijkstra_path_length(self.graph, target, weight=self._attr)

    def dist(self, a, b) -> float:
        return self.distances_to(b).get(a, math.inf)

    def path(self, a, b) -> Optional[list]:
        key = (a, b)
        if key in self._paths:
            return self._paths[key]
        dist = self.distances_to(b)
        if a not in dist:
            self._paths[key] = None
            return None
        p = _tight_path(a, b, dist, self._adj, self.weight)
        self._paths[key] = p
        return p

    def cost(self, a, b) -> float:
        """Cost of :meth:`path`, summed left to right."""
        c = self._costs.get((a, b))
        if c is None:
            p = self.path(a, b)
            c = math.inf if p is None else path_cost(p, self.weight)
            self._costs[(a, b)] = c
        return c

    def result(self, a, b) -> PathResult:
        p = self.path(a, b)
        return PathResult(math.inf if p is None else path_cost(p, self.weight), p)


class ShortestPaths(GraphPaths):
    """Shortest paths over a :class:`Network`.

    ``connection_plus_half_setups`` adds half the setup cost of both endpoints
    to every link, which charges each pass-through VM its full setup.
    """

    def __init__(self, network: Network, metric: str = "connection_only"):
        if metric not in ("connection_only", "connection_plus_half_setups"):
            raise ValueError(f"unknown metric {metric!r}")
        super().__init__(network.graph, "cost")
        self.network = network
        self.metric = metric

    def weight(self, a, b) -> float:
        w = self.network.cost(a, b)
        if self.metric == "connection_plus_half_setups":
            w += (self.network.setup(a) + self.network.setup(b)) / 2
        return w

    def _compute(self, target) -> dict:
        if self.metric == "connection_only":
            return super()._compute(target)
        return nx.single_source_dijkstra_path_length(
            self.graph, target, weight=lambda a, b, _d: self.weight(a, b)
        )


def path_cost(path: list, weight) -> float:
    total = 0.0
    for a, b in zip(path, path[1:]):
        total += weight(a, b)
    return total


def _tight_path(a, b, dist: dict, adj: dict, weight) -> list:
    """Lexicographically smallest shortest path via DFS over tight edges."""
    if a == b:
        return [a]

    def tight(x, y):
        if y not in dist:
            return False
        lhs = weight(x, y) + dist[y]
        return abs(lhs - dist[x]) <= TIGHT_TOL * max(1.0, abs(dist[x]))

    path = [a]
    on_path = {a}
    iters = [iter([y for y in adj[a] if tight(a, y)])]
    dead = set()
    while iters:
        nxt = next(iters[-1], None)
        if nxt is None:
            iters.pop()
            gone = path.pop()
            on_path.discard(gone)
            dead.add(gone)
            continue
        if nxt in on_path or nxt in dead:
            continue
        path.append(nxt)
        on_path.add(nxt)
        if nxt == b:
            return path
        iters.append(iter([y for y in adj[nxt] if tight(nxt, y)]))
    raise RuntimeError(f"no tight path from {a} to {b}; distances inconsistent")


def shortest_path(network: Network, u, v, metric: str = "connection_only") -> PathResult:
    if u not in network or v not in network:
        raise StructureError(f"unknown endpoint in ({u}, {v})")
    return ShortestPaths(network, metric).result(u, v)


# ---------------------------------------------------------------------------
# instance


@dataclass
class SofInstance:
    network: Network
    sources: frozenset
    destinations: frozenset
    chain_len: int
    source_setup_costs: Optional[dict] = None

    def __post_init__(self):
        self.sources = frozenset(self.sources)
        self.destinations = frozenset(self.destinations)
        if self.chain_len < 0:
            raise ValueError("chain length must be non-negative")
        for x in self.sources | self.destinations:
            if x not in self.network:
                raise StructureError(f"unknown node {x}")
        if self.source_setup_costs:
            if any(c < 0 for c in self.source_setup_costs.values()):
                raise ValueError("negative source setup cost")

    @property
    def vms(self) -> list:
        return self.network.vms

    def source_cost(self, s) -> float:
        if not self.source_setup_costs:
            return 0.0
        return float(self.source_setup_costs.get(s, 0.0))

    def check_feasible(self, paths: ShortestPaths | None = None) -> None:
        """Cheap necessary conditions; raises :class:`InfeasibleError`.

        A chain of length 0 only arises from deleting VNFs of a deployed
        forest; the solvers reject it.
        """
        if self.chain_len < 1:
            raise ValueError("chain length must be at least 1")
        if not self.destinations:
            return
        if not self.sources:
            raise InfeasibleError("no source")
        comp_of = {}
        for i, comp in enumerate(nx.connected_components(self.network.graph)):
            for n in comp:
                comp_of[n] = i
        vms_in = {}
        for v in self.vms:
            vms_in[comp_of[v]] = vms_in.get(comp_of[v], 0) + 1
        for d in sorted_nodes(self.destinations):
            ok = any(
                comp_of[s] == comp_of[d] and vms_in.get(comp_of[s], 0) >= self.chain_len
                for s in self.sources
            )
            if not ok:
                raise InfeasibleError(
                    f"destination {d} has no source with {self.chain_len} reachable VMs"
                )

    def with_network(self, network: Network) -> "SofInstance":
        return SofInstance(network, self.sources, self.destinations, self.chain_len, self.source_setup_costs)


# ---------------------------------------------------------------------------
# walks


@dataclass(frozen=True)
class Visit:
    node_id: Node
    clone_index: int
    vnf: Optional[int]


@dataclass(frozen=True)
class ServiceWalk:
    """A walk in the network with VNF markers on some visits.

    ``vnfs[i]`` is the VNF index run at the i-th visit or ``None``.
    """

    nodes: tuple
    vnfs: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "vnfs", tuple(self.vnfs))
        if len(self.nodes) != len(self.vnfs):
            raise ValueError("nodes and vnfs differ in length")
        if not self.nodes:
            raise ValueError("empty walk")
        marks = [m for m in self.vnfs if m is not None]
        if any(b <= a for a, b in zip(marks, marks[1:])):
            raise ValueError(f"VNF indices must increase along the walk: {marks}")

    @classmethod
    def from_markers(cls, nodes, markers: dict) -> "ServiceWalk":
        """``markers`` maps visit position to VNF index."""
        return cls(tuple(nodes), tuple(markers.get(i) for i in range(len(nodes))))

    @property
    def source(self):
        return self.nodes[0]

    @property
    def terminal(self):
        return self.nodes[-1]

    def __len__(self) -> int:
        return len(self.nodes)

    def marked(self) -> list:
        """(position, node, vnf index) for every marked visit."""
        return [(i, n, m) for i, (n, m) in enumerate(zip(self.nodes, self.vnfs)) if m is not None]

    def layer_after(self, pos: int) -> int:
        """Layer of the stream when it leaves visit ``pos``."""
        layer = 0
        for m in self.vnfs[: pos + 1]:
            if m is not None:
                layer = m
        return layer

    @property
    def final_layer(self) -> int:
        return self.layer_after(len(self.nodes) - 1)

    @property
    def visits(self) -> list:
        out, layer = [], 0
        for n, m in zip(self.nodes, self.vnfs):
            out.append(Visit(n, layer, m))
            if m is not None:
                layer = m
        return out

    def arcs(self, start_layer: int = 0) -> list:
        """Clone-space arcs of the walk, starting at ``start_layer``."""
        out = []
        layer = start_layer
        prev = None
        for n, m in zip(self.nodes, self.vnfs):
            if prev is not None:
                out.append(((prev, layer), (n, layer)))
            if m is not None:
                if m != layer + 1:
                    raise ValueError(f"walk skips from layer {layer} to VNF {m} at {n}")
                out.append(((n, layer), (n, m)))
                layer = m
            prev = n
        return out

    def connection_cost(self, network: Network) -> float:
        return sum(network.cost(a, b) for a, b in zip(self.nodes, self.nodes[1:]))

    def setup_cost(self, network: Network) -> float:
        return sum(network.setup(n) for _, n, _ in self.marked())

    def cost(self, network: Network) -> float:
        return self.connection_cost(network) + self.setup_cost(network)


# ---------------------------------------------------------------------------
# forests


@dataclass
class ServiceForest:
    """Union of clone-space arcs.

    ``walks`` keeps the source-to-last-VM chain walks that produced part of
    the forest (used by conflict resolution); ``arcs`` holds every other arc
    (trees towards destinations, dynamic edits).  ``served`` maps each
    destination to the source whose tree reaches it.
    """

    chain_len: int
    walks: list = field(default_factory=list)
    arcs: set = field(default_factory=set)
    served: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def copy(self) -> "ServiceForest":
        return ServiceForest(self.chain_len, list(self.walks), set(self.arcs), dict(self.served), dict(self.meta))

    def add_walk(self, walk: ServiceWalk) -> None:
        self.walks.append(walk)

    def add_path(self, nodes: list, layer: int) -> None:
        for a, b in zip(nodes, nodes[1:]):
            self.arcs.add(((a, layer), (b, layer)))

    def all_arcs(self) -> set:
        out = set(self.arcs)
        for w in self.walks:
            out.update(w.arcs())
        return out

    def flatten(self) -> "ServiceForest":
        """Same forest with walks folded into plain arcs."""
        return ServiceForest(self.chain_len, [], self.all_arcs(), dict(self.served), dict(self.meta))

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_edges_from(self.all_arcs())
        return g

    def link_arcs(self) -> list:
        return [a for a in self.all_arcs() if a[0][0] != a[1][0]]

    def vnf_arcs(self) -> list:
        return [a for a in self.all_arcs() if a[0][0] == a[1][0]]

    def vnf_assignments(self) -> dict:
        out: dict = {}
        for (v, _), (_, i) in self.vnf_arcs():
            out.setdefault(v, set()).add(i)
        return out

    @property
    def enabled_vms(self) -> dict:
        return {v: min(ix) for v, ix in self.vnf_assignments().items()}

    @property
    def destination_paths(self) -> dict:
        return dict(self.served)

    def is_empty(self) -> bool:
        return not self.walks and not self.arcs


@dataclass
class ForestCost:
    setup: float
    connection: float

    @property
    def total(self) -> float:
        return self.setup + self.connection


def roots(instance: SofInstance, forest: ServiceForest) -> list:
    g = forest.graph()
    return [s for s in sorted_nodes(instance.sources) if (s, 0) in g and g.in_degree((s, 0)) == 0]


def forest_cost(instance: SofInstance, forest: ServiceForest) -> ForestCost:
    net = instance.network
    setup = 0.0
    for v, ix in forest.vnf_assignments().items():
        setup += net.setup(v) * len(ix)
    if instance.source_setup_costs:
        for s in roots(instance, forest):
            setup += instance.source_cost(s)
    conn = 0.0
    for (a, _), (b, _) in forest.link_arcs():
        conn += net.cost(a, b)
    return ForestCost(setup, conn)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    structural: list = field(default_factory=list)
    served: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.structural

    def __bool__(self) -> bool:
        return self.ok


def trace_sources(instance: SofInstance, g: nx.DiGraph) -> dict:
    """Multi-source BFS from source roots; maps clone -> serving source."""
    owner = {}
    q = deque()
    for s in sorted_nodes(instance.sources):
        c = (s, 0)
        if c in g and c not in owner:
            owner[c] = s
            q.append(c)
    while q:
        c = q.popleft()
        for nxt in sorted(g.successors(c), key=node_key):
            if nxt not in owner:
                owner[nxt] = owner[c]
                q.append(nxt)
    return owner


def validate_forest(instance: SofInstance, forest: ServiceForest) -> ValidationReport:
    rep = ValidationReport()
    net = instance.network
    C = forest.chain_len
    arcs = forest.all_arcs()
    for (a, la), (b, lb) in sorted(arcs, key=node_key):
        for x in (a, b):
            if x not in net:
                rep.structural.append(f"unknown node {x}")
        if a in net and b in net and a != b and not net.has_edge(a, b):
            rep.structural.append(f"unknown link ({a}, {b})")
        if not (0 <= la <= C and 0 <= lb <= C):
            rep.structural.append(f"arc {(a, la)}->{(b, lb)} outside layers 0..{C}")
    if rep.structural:
        return rep
    for (a, la), (b, lb) in sorted(arcs, key=node_key):
        if a == b:
            if lb != la + 1:
                rep.violations.append(f"VNF arc at {a} jumps from layer {la} to {lb}")
            elif not net.is_vm(a):
                rep.violations.append(f"VNF f_{lb} placed on non-VM {a}")
        elif la != lb:
            rep.violations.append(f"link ({a}, {b}) changes layer")
    for v, ix in sorted(forest.vnf_assignments().items(), key=lambda kv: node_key(kv[0])):
        if len(ix) > 1:
            rep.violations.append(f"VNF conflict at {v}: " + ", ".join(f"f_{i}" for i in sorted(ix)))
    for w in forest.walks:
        if w.source not in instance.sources:
            rep.violations.append(f"walk rooted at non-source {w.source}")
    g = forest.graph()
    owner = trace_sources(instance, g)
    for c in sorted(g.nodes, key=node_key):
        if c not in owner:
            rep.violations.append(f"clone {c} unreachable from any source")
            break
    for d in sorted_nodes(instance.destinations):
        src = owner.get((d, C))
        if src is None:
            rep.violations.append(f"destination {d} has no complete chain")
        else:
            rep.served[d] = src
    return rep


# ---------------------------------------------------------------------------
# serialization


def forest_to_dict(forest: ServiceForest) -> dict:
    """JSON-ready dump: clone arcs plus the VNF map; walks are flattened."""
    arcs = sorted(forest.all_arcs(), key=node_key)
    return {
        "chain_len": forest.chain_len,
        "arcs": [[a, la, b, lb] for (a, la), (b, lb) in arcs],
        "vnfs": {str(v): sorted(ix) for v, ix in sorted(forest.vnf_assignments().items(), key=lambda kv: node_key(kv[0]))},
        "served": [[d, s] for d, s in sorted(forest.served.items(), key=lambda kv: node_key(kv[0]))],
    }


def forest_from_dict(data: dict) -> ServiceForest:
    f = ServiceForest(int(data["chain_len"]))
    for a, la, b, lb in data["arcs"]:
        f.arcs.add(((a, int(la)), (b, int(lb))))
    f.served = {d: s for d, s in data.get("served", [])}
    return f
