"""Multi-controller execution of ``sofda`` as a synchronous message-passing simulation.

Each controller owns one domain and only knows its own links.  Controllers
exchange border-router distance matrices, and the leader (the controller
owning the first source) answers every shortest-path question by asking
the other controllers for the parts of the path that run through them.
Distances come out identical to a global Dijkstra, and paths are recovered
with the same tie-break, so the forest equals the centralized one.
"""

from __future__ import annotations

import heapq
import math
import random
from collections import Counter
from dataclasses import dataclass, field

from .core import Network, ShortestPaths, SofInstance, StructureError, node_key, sorted_nodes
from .sofda import build_aux_graph, sofda

MESSAGE_KINDS = (
    "BorderMatrix",
    "ReachabilityInfo",
    "PathQuery",
    "PathReply",
    "ChainAdvert",
    "ConflictNotify",
    "ConflictResolve",
    "Deploy",
)


@dataclass
class Domain:
    cid: int
    nodes: frozenset
    borders: list = field(default_factory=list)
    matrix: dict = field(default_factory=dict)  # (b1, b2) -> distance inside the domain


@dataclass(frozen=True)
class Message:
    round: int
    src: int
    dst: int
    kind: str
    payload: object = None


@dataclass
class MessageStats:
    counts: dict = field(default_factory=dict)
    rounds: int = 0
    pruned_chains: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_dict(self) -> dict:
        return {
            "counts": {k: self.counts.get(k, 0) for k in MESSAGE_KINDS},
            "total": self.total,
            "rounds": self.rounds,
            "pruned_chains": self.pruned_chains,
        }


class _Bus:
    """Synchronous rounds; messages between different controllers only."""

    def __init__(self):
        self.round = 0
        self.log: list = []

    def next_round(self) -> int:
        self.round += 1
        return self.round

    def send(self, src, dst, kind, payload=None) -> None:
        if src != dst:
            self.log.append(Message(self.round, src, dst, kind, payload))

    def stats(self) -> MessageStats:
        counts = Counter(m.kind for m in self.log)
        rounds = len({m.round for m in self.log})
        return MessageStats(dict(counts), rounds)


# ---------------------------------------------------------------------------
# partition


def _adjacency(graph, nodes=None, weight: str = "cost") -> dict:
    keep = graph.nodes if nodes is None else nodes
    out = {n: [] for n in keep}
    for a, b, d in graph.edges(data=True):
        if a in out and b in out:
            out[a].append((b, d[weight]))
            out[b].append((a, d[weight]))
    return out


def _seeded_dijkstra(adj: dict, seeds: dict) -> dict:
    dist = dict(seeds)
    heap = [(d, node_key(n), n) for n, d in seeds.items()]
    heapq.heapify(heap)
    done = set()
    while heap:
        d, _, n = heapq.heappop(heap)
        if n in done or d > dist[n]:
            continue
        done.add(n)
        for m, w in adj.get(n, ()):
            nd = d + w
            if nd < dist.get(m, math.inf):
                dist[m] = nd
                heapq.heappush(heap, (nd, node_key(m), m))
    return dist


def _finish(network: Network, groups: list) -> list:
    g = network.graph
    owner = {n: i for i, grp in enumerate(groups) for n in grp}
    out = []
    for i, grp in enumerate(groups):
        borders = sorted_nodes(n for n in grp if any(owner[m] != i for m in g.neighbors(n)))
        adj = _adjacency(g, set(grp))
        matrix = {}
        for b in borders:
            d = _seeded_dijkstra(adj, {b: 0.0})
            for c in borders:
                if c in d:
                    matrix[(b, c)] = d[c]
        out.append(Domain(i, frozenset(grp), borders, matrix))
    return out


def partition(network: Network, k_domains: int, seed: int = 0) -> list:
    """Grow ``k`` domains by BFS from random seed nodes, smallest domain first."""
    nodes = sorted_nodes(network.nodes)
    if not 1 <= k_domains <= len(nodes):
        raise ValueError(f"cannot split {len(nodes)} nodes into {k_domains} domains")
    rng = random.Random(seed)
    seeds = rng.sample(nodes, k_domains)
    g = network.graph
    owner = {s: i for i, s in enumerate(seeds)}
    groups = [[s] for s in seeds]
    frontier = [sorted_nodes(g.neighbors(s)) for s in seeds]
    while len(owner) < len(nodes):
        grown = False
        for i in sorted(range(k_domains), key=lambda i: (len(groups[i]), i)):
            nxt = [n for n in frontier[i] if n not in owner]
            frontier[i] = nxt
            if not nxt:
                continue
            n = nxt[0]
            owner[n] = i
            groups[i].append(n)
            frontier[i] = sorted_nodes(set(nxt[1:]) | {m for m in g.neighbors(n) if m not in owner})
            grown = True
            break
        if not grown:
            # another component: give it to the smallest domain
            i = min(range(k_domains), key=lambda i: (len(groups[i]), i))
            n = next(x for x in nodes if x not in owner)
            owner[n] = i
            groups[i].append(n)
            frontier[i] = sorted_nodes(m for m in g.neighbors(n) if m not in owner)
    return _finish(network, groups)


def check_partition(network: Network, domains: list) -> dict:
    owner = {}
    for d in domains:
        for n in d.nodes:
            if n in owner:
                raise StructureError(f"node {n} is in domains {owner[n]} and {d.cid}")
            owner[n] = d.cid
    missing = [n for n in network.nodes if n not in owner]
    extra = [n for n in owner if n not in network]
    if missing or extra:
        raise StructureError(f"partition does not match the network (missing {missing[:5]}, unknown {extra[:5]})")
    return owner


# ---------------------------------------------------------------------------
# protocol


class ProtocolPaths(ShortestPaths):
    """Shortest paths answered by the controllers instead of a global Dijkstra.

    For target ``t`` in domain ``D``: ``D`` runs a local Dijkstra from ``t``;
    the leader runs Dijkstra on the border overlay (exchanged matrices plus
    cross links); every controller then finishes its own nodes seeded with
    its border-router distances.
    """

    def __init__(self, network: Network, domains: list, leader: int, bus: _Bus):
        super().__init__(network)
        self.domains = domains
        self.owner = check_partition(network, domains)
        self.leader = leader
        self.bus = bus
        g = network.graph
        self._local = [_adjacency(g, d.nodes) for d in domains]
        overlay: dict = {}
        for d in domains:
            for (b, c), w in d.matrix.items():
                if b != c:
                    overlay.setdefault(b, []).append((c, w))
        for a, b, data in g.edges(data=True):
            if self.owner[a] != self.owner[b]:
                overlay.setdefault(a, []).append((b, data["cost"]))
                overlay.setdefault(b, []).append((a, data["cost"]))
        self._overlay = overlay
        self.queries = 0

    def _compute(self, target) -> dict:
        self.queries += 1
        home = self.owner[target]
        others = [d.cid for d in self.domains if d.cid != self.leader]
        self.bus.next_round()
        for cid in others:
            self.bus.send(self.leader, cid, "PathQuery", target)
        local = _seeded_dijkstra(self._local[home], {target: 0.0})
        seeds = {b: local[b] for b in self.domains[home].borders if b in local}
        border = _seeded_dijkstra(self._overlay, seeds) if seeds else {}
        dist: dict = {}
        for d in self.domains:
            start = {b: border[b] for b in d.borders if b in border}
            if d.cid == home:
                start[target] = 0.0
            if start:
                dist.update(_seeded_dijkstra(self._local[d.cid], start))
        self.bus.next_round()
        for cid in others:
            self.bus.send(cid, self.leader, "PathReply", target)
        return dist


def run_distributed_sofda(instance: SofInstance, domains: list, mode: str = "auto") -> tuple:
    """Run ``sofda`` through the controller protocol; returns ``(forest, MessageStats)``."""
    net = instance.network
    owner = check_partition(net, domains)
    k = len(domains)
    bus = _Bus()

    bus.next_round()
    for d in domains:
        for e in domains:
            bus.send(d.cid, e.cid, "BorderMatrix", len(d.matrix))

    sources = sorted_nodes(instance.sources)
    leader = owner[sources[0]] if sources else 0
    bus.next_round()
    for d in domains:
        info = {
            "sources": len(instance.sources & d.nodes),
            "destinations": len(instance.destinations & d.nodes),
            "vms": sum(1 for v in net.vms if v in d.nodes),
        }
        bus.send(d.cid, leader, "ReachabilityInfo", info)

    paths = ProtocolPaths(net, domains, leader, bus)
    forest = sofda(instance, g_paths=paths, mode=mode)
    chosen = set(forest.meta.get("chains", []))
    pruned = 0
    if instance.destinations:
        aux = build_aux_graph(instance, paths, mode)  # distances are cached; no new queries
        bus.next_round()
        for s, u in sorted(aux.virtual, key=node_key):
            bus.send(owner[u], leader, "ChainAdvert", (s, u))
            pruned += (s, u) not in chosen

    for rep in forest.meta.get("conflicts", []):
        for rec in rep.records:
            bus.next_round()
            bus.send(leader, owner[rec.vm], "ConflictNotify", rec.vm)
            bus.next_round()
            bus.send(owner[rec.vm], leader, "ConflictResolve", rec.case)

    used = {n for arc in forest.all_arcs() for n, _ in arc}
    bus.next_round()
    for d in domains:
        if used & d.nodes:
            bus.send(leader, d.cid, "Deploy", len(used & d.nodes))

    stats = bus.stats()
    stats.pruned_chains = pruned
    forest.meta.update({"domains": k, "leader": leader, "messages": stats.as_dict()})
    return forest, stats
