"""Reference implementations used only by the tests.

Each one is written from the problem definition with plain enumeration and
networkx shortest paths, sharing no code with the package beyond the data
classes, so agreement is meaningful.
"""

from __future__ import annotations

import itertools
import math
import random
from functools import lru_cache

import networkx as nx

from sofnet.core import SWITCH, VM, Network, SofInstance

# ---------------------------------------------------------------------------
# instances


def random_instance(seed, n=8, m=4, chain=2, n_sources=2, n_dests=2, extra=4, max_cost=9, max_setup=8):
    """Connected random network with integer costs and disjoint S and D."""
    rng = random.Random(seed)
    g = nx.random_labeled_tree(n, seed=seed) if hasattr(nx, "random_labeled_tree") else nx.random_tree(n, seed=seed)
    edges = {tuple(sorted(e)) for e in g.edges}
    limit = n * (n - 1) // 2
    while len(edges) < min(n - 1 + extra, limit):
        a, b = rng.sample(range(n), 2)
        edges.add((min(a, b), max(a, b)))
    vms = set(rng.sample(range(n), m))
    net = Network()
    for v in range(n):
        net.add_node(v, VM if v in vms else SWITCH, rng.randint(0, max_setup) if v in vms else 0)
    for a, b in sorted(edges):
        net.add_edge(a, b, rng.randint(1, max_cost))
    picked = rng.sample(range(n), n_sources + n_dests)
    return SofInstance(net, picked[:n_sources], picked[n_sources:], chain)


# ---------------------------------------------------------------------------
# cost model


def slope_integral_cost(load, capacity, thresholds=(1 / 3, 2 / 3, 9 / 10, 1.0, 11 / 10), slopes=(1, 3, 10, 70, 500, 5000)):
    """Integrate the piecewise slope from 0 to ``load``; continuous by construction."""
    total, prev = 0.0, 0.0
    for t, s in zip(thresholds, slopes):
        upper = min(load, t * capacity)
        if upper > prev:
            total += s * (upper - prev)
            prev = upper
        if load <= t * capacity:
            return total
    return total + slopes[-1] * (load - prev)


# ---------------------------------------------------------------------------
# Steiner trees


def steiner_brute(graph: nx.Graph, root, terminals, weight="cost") -> float:
    """Minimum Steiner tree cost: best MST over every connected superset."""
    need = set(terminals) | {root}
    optional = [n for n in graph.nodes if n not in need]
    best = math.inf
    for r in range(len(optional) + 1):
        for extra in itertools.combinations(optional, r):
            sub = graph.subgraph(need | set(extra))
            if not nx.is_connected(sub):
                continue
            t = nx.minimum_spanning_tree(sub, weight=weight)
            best = min(best, t.size(weight=weight))
    return best


def directed_steiner(dist: dict, nodes: list, root, terminals) -> float:
    """Minimum arborescence from ``root`` spanning ``terminals`` given all-pairs ``dist``."""
    terms = tuple(sorted(terminals, key=repr))
    full = (1 << len(terms)) - 1

    def d(a, b):
        return dist.get(a, {}).get(b, math.inf)

    @lru_cache(maxsize=None)
    def split_at(mask, u):
        # arborescence rooted at u that branches at u
        best = math.inf
        sub = (mask - 1) & mask
        while sub:
            if sub < (mask ^ sub):
                best = min(best, reach(sub, u) + reach(mask ^ sub, u))
            sub = (sub - 1) & mask
        return best

    @lru_cache(maxsize=None)
    def reach(mask, v):
        if mask & (mask - 1) == 0:
            t = terms[mask.bit_length() - 1]
            return d(v, t)
        return min(d(v, u) + split_at(mask, u) for u in nodes)

    return reach(full, root) if terms else 0.0


# ---------------------------------------------------------------------------
# service overlay forest optimum


def sof_brute(instance: SofInstance) -> float:
    """Optimum forest cost by enumerating every partial VNF placement.

    For each placement a layered digraph is built: node ``(v, i)`` is node
    ``v`` after ``i`` functions, links are free to use in either direction
    at every layer, and ``(v, i-1) -> (v, i)`` exists only where ``v`` runs
    function ``i``.  A super root feeds every ``(s, 0)``.  The optimum over
    placements of the directed Steiner cost to every ``(d, C)`` is returned.
    """
    net = instance.network
    C = instance.chain_len
    vms = net.vms
    dests = sorted(instance.destinations)
    if not dests:
        return 0.0
    best = math.inf
    for labels in itertools.product(range(C + 1), repeat=len(vms)):
        placed = {v: i for v, i in zip(vms, labels) if i}
        if len(set(placed.values())) < C:
            continue
        g = nx.DiGraph()
        for i in range(C + 1):
            for a, b, data in net.graph.edges(data=True):
                g.add_edge((a, i), (b, i), w=data["cost"])
                g.add_edge((b, i), (a, i), w=data["cost"])
        for v, i in placed.items():
            g.add_edge((v, i - 1), (v, i), w=net.setup(v))
        for s in instance.sources:
            g.add_edge("R", (s, 0), w=instance.source_cost(s))
        dist = dict(nx.all_pairs_dijkstra_path_length(g, weight="w"))
        cost = directed_steiner(dist, list(g.nodes), "R", [(d, C) for d in dests])
        best = min(best, cost)
    return best


# ---------------------------------------------------------------------------
# k-stroll


def kstroll_brute(mi, k: int) -> float:
    """Cheapest simple path with ``k`` distinct nodes from source to last VM."""
    s, u = mi.source, mi.last_vm
    middle = [x for x in mi.nodes if x not in (s, u)]
    best = math.inf
    for mid in itertools.permutations(middle, k - 2):
        seq = (s,) + mid + (u,)
        best = min(best, sum(mi.cost(a, b) for a, b in zip(seq, seq[1:])))
    return best


def conflicting_vms(forest) -> list:
    """VMs that run more than one function index."""
    return sorted(v for v, ix in forest.vnf_assignments().items() if len(ix) > 1)


# ---------------------------------------------------------------------------
# workloads


def conflict_merge(seed, residents=2):
    """Merge random chain walks into a forest, then merge one more.

    Returns ``(instance, before, after, report)`` where ``before`` is the
    forest with the last walk appended verbatim and ``after`` is the
    resolved forest.  The instance's destinations are the walks' last VMs so
    the result can be validated.
    """
    from sofnet.core import ServiceForest, ShortestPaths
    from sofnet.kstroll import chain_walk
    from sofnet.sofda import resolve_conflicts

    rng = random.Random(seed)
    inst = random_instance(seed, n=10, m=6, chain=rng.randint(2, 4), n_sources=3, n_dests=1, extra=6)
    paths = ShortestPaths(inst.network)
    C = inst.chain_len
    vms = inst.network.vms
    sources = sorted(inst.sources)
    walks = []
    for _ in range(residents + 1):
        s = rng.choice(sources)
        walks.append(chain_walk([s] + rng.sample([v for v in vms if v != s], C), paths.path))
    forest = ServiceForest(C)
    for w in walks[:-1]:
        forest, _ = resolve_conflicts(forest, w, C, inst, paths)
    before = forest.copy()
    before.walks = before.walks + [walks[-1]]
    after, rep = resolve_conflicts(forest, walks[-1], C, inst, paths)
    check = SofInstance(inst.network, inst.sources, {w.terminal for w in after.walks}, C)
    return check, before, after, rep


def loaded_instance(seed, nodes=16, edges=26, dcs=5, vms=8, n_sources=3, n_dests=3, chain=2):
    """Small generated instance whose links and VMs carry capacity and load."""
    from sofnet.topology import GeneratorParams, generate_topology, sample_instance

    net = generate_topology(GeneratorParams(nodes, edges, dcs, vms=vms), seed)
    return sample_instance(net, n_sources, n_dests, chain, random.Random(seed))


EVENT_KINDS = ("join", "leave", "insert", "delete", "congest")


def random_event(state, rng, max_chain=4):
    """One random, well-formed event for the current deployment."""
    from sofnet.dynamics import Event

    inst = state.instance
    net = inst.network
    kind = rng.choice(EVENT_KINDS)
    if kind == "join":
        return Event("join", (rng.choice([n for n in net.nodes if not net.is_vm(n)]),))
    if kind == "leave":
        pool = sorted(inst.destinations) or net.nodes
        return Event("leave", (rng.choice(pool),))
    if kind == "insert" and inst.chain_len < max_chain:
        return Event("insert", (rng.randint(1, inst.chain_len + 1),))
    if kind == "delete" and inst.chain_len > 1:
        return Event("delete", (rng.randint(1, inst.chain_len),))
    load = rng.choice([10.0, 60.0, 95.0, 105.0, 120.0])
    used = sorted({(a[0], b[0]) for a, b in state.arcs if a[0] != b[0]}, key=repr)
    if rng.random() < 0.5 and used:
        u, v = rng.choice(used)
        return Event("congest", ("edge", u, v, load))
    return Event("congest", ("vm", rng.choice(net.vms), load))
