"""Steiner tree solvers.

``steiner_approx`` is the Kou-Markowsky-Berman metric-closure heuristic
(ratio 2).  ``steiner_exact`` is the Dreyfus-Wagner subset DP; on a directed
graph it returns a minimum Steiner arborescence rooted at ``root``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field

import networkx as nx

from .core import GraphPaths, InfeasibleError, node_key, sorted_nodes

APPROX = "approx"
EXACT = "exact"

MAX_EXACT_TERMINALS = 12


@dataclass
class SteinerResult:
    edges: list  # (u, v) oriented away from the root
    terminals: frozenset
    cost: float
    solver: str
    root: object = None
    meta: dict = field(default_factory=dict)

    @property
    def nodes(self) -> set:
        out = {self.root} if self.root is not None else set()
        for u, v in self.edges:
            out.update((u, v))
        return out


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        p = self.parent.setdefault(x, x)
        if p != x:
            p = self.parent[x] = self.find(p)
        return p

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def _kruskal(weighted_edges) -> list:
    """Deterministic MST/forest over ``(w, a, b)`` triples."""
    uf = _UnionFind()
    out = []
    for w, a, b in sorted(weighted_edges, key=lambda t: (t[0], node_key(t[1]), node_key(t[2]))):
        if uf.union(a, b):
            out.append((w, a, b))
    return out


def _canon(a, b) -> tuple:
    return (a, b) if node_key(a) <= node_key(b) else (b, a)


def _orient(edges, root) -> list:
    adj: dict = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    if root not in adj:
        return []
    out, seen, stack = [], {root}, [root]
    while stack:
        x = stack.pop()
        for y in sorted_nodes(adj[x]):
            if y not in seen:
                seen.add(y)
                out.append((x, y))
                stack.append(y)
    return out


def prune_leaves(edges, keep) -> list:
    """Drop degree-1 nodes outside ``keep`` until none remain."""
    edges = set(_canon(a, b) for a, b in edges)
    while True:
        deg: dict = {}
        for a, b in edges:
            deg[a] = deg.get(a, 0) + 1
            deg[b] = deg.get(b, 0) + 1
        leaves = {n for n, d in deg.items() if d == 1 and n not in keep}
        if not leaves:
            return sorted(edges, key=node_key)
        edges = {e for e in edges if e[0] not in leaves and e[1] not in leaves}


def steiner_approx(graph, root, terminals, weight: str = "cost") -> SteinerResult:
    """KMB 2-approximation.

    ``graph`` is either an undirected ``nx.Graph`` or a path provider with
    ``path``, ``cost`` and ``weight`` methods (see :class:`GraphPaths`).
    """
    paths = GraphPaths(graph, weight) if isinstance(graph, nx.Graph) else graph
    terms = sorted_nodes(set(terminals) | {root})
    if root not in paths:
        raise InfeasibleError(f"root {root} is not in the graph")
    for t in terms:
        if t not in paths:
            raise InfeasibleError(f"terminal {t} is not in the graph")
    if len(terms) == 1:
        return SteinerResult([], frozenset(terms), 0.0, APPROX, root)
    closure = []
    for a, b in itertools.combinations(terms, 2):
        a, b = _canon(a, b)
        c = paths.cost(a, b)
        if c == math.inf:
            far = b if a == root else a
            raise InfeasibleError(f"terminal {far} is unreachable from {root if far != root else a}")
        closure.append((c, a, b))
    sub = {}
    for _, a, b in _kruskal(closure):
        p = paths.path(a, b)
        for x, y in zip(p, p[1:]):
            sub[_canon(x, y)] = paths.weight(x, y)
    tree = _kruskal((w, a, b) for (a, b), w in sub.items())
    edges = prune_leaves([(a, b) for _, a, b in tree], set(terms))
    cost = 0.0
    for a, b in edges:
        cost += sub[(a, b)]
    return SteinerResult(_orient(edges, root), frozenset(terms), cost, APPROX, root)


# ---------------------------------------------------------------------------
# exact


def steiner_exact(graph, root, terminals, weight: str = "cost", limit: int = MAX_EXACT_TERMINALS) -> SteinerResult:
    """Dreyfus-Wagner DP; ``O(3^t n + 2^t n log n)`` for ``t`` terminals."""
    terms = sorted_nodes(set(terminals) - {root})
    if len(terms) > limit:
        raise ValueError(
            f"{len(terms)} terminals exceed the exact-solver limit of {limit}; use steiner_approx"
        )
    if root not in graph:
        raise InfeasibleError(f"root {root} is not in the graph")
    for t in terms:
        if t not in graph:
            raise InfeasibleError(f"terminal {t} is not in the graph")
    if not terms:
        return SteinerResult([], frozenset({root}), 0.0, EXACT, root)

    directed = graph.is_directed()
    nodes = sorted_nodes(graph.nodes)
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    # reverse adjacency: for relaxation dp[v] <- w(v,u) + dp[u]
    radj = [[] for _ in range(n)]
    for a, b, d in graph.edges(data=True):
        w = d[weight]
        radj[idx[b]].append((idx[a], w))
        if not directed:
            radj[idx[a]].append((idx[b], w))

    t = len(terms)
    full = (1 << t) - 1
    INF = math.inf
    dp = [None] * (full + 1)
    how = [None] * (full + 1)

    def relax(vals, choice):
        # multi-source Dijkstra on reversed arcs; choice[v] = ("move", u)
        heap = [(vals[i], i) for i in range(n) if vals[i] < INF]
        heapq.heapify(heap)
        done = [False] * n
        while heap:
            dv, u = heapq.heappop(heap)
            if done[u] or dv > vals[u]:
                continue
            done[u] = True
            for v, w in radj[u]:
                nd = dv + w
                if nd < vals[v] - 1e-12:
                    vals[v] = nd
                    choice[v] = ("move", u)
                    heapq.heappush(heap, (nd, v))

    for k, term in enumerate(terms):
        m = 1 << k
        vals = [INF] * n
        vals[idx[term]] = 0.0
        choice = [None] * n
        choice[idx[term]] = ("leaf",)
        relax(vals, choice)
        dp[m], how[m] = vals, choice

    for size in range(2, t + 1):
        for combo in itertools.combinations(range(t), size):
            mask = 0
            for k in combo:
                mask |= 1 << k
            low = mask & -mask
            vals = [INF] * n
            choice = [None] * n
            rest = mask ^ low
            sub = rest
            while True:
                a = sub | low
                b = mask ^ a
                if b:
                    da, db = dp[a], dp[b]
                    for v in range(n):
                        c = da[v] + db[v]
                        if c < vals[v] - 1e-12:
                            vals[v] = c
                            choice[v] = ("split", a, b)
                if sub == 0:
                    break
                sub = (sub - 1) & rest
            relax(vals, choice)
            dp[mask], how[mask] = vals, choice

    r = idx[root]
    if dp[full][r] == INF:
        for k, term in enumerate(terms):
            if dp[1 << k][r] == INF:
                raise InfeasibleError(f"terminal {term} is unreachable from {root}")
        raise InfeasibleError("terminals cannot be spanned from the root")

    arcs = []
    stack = [(full, r)]
    while stack:
        mask, v = stack.pop()
        ch = how[mask][v]
        if ch[0] == "leaf":
            continue
        if ch[0] == "move":
            u = ch[1]
            arcs.append((nodes[v], nodes[u]))
            stack.append((mask, u))
        else:
            stack.append((ch[1], v))
            stack.append((ch[2], v))
    # overlapping sub-solutions may repeat an arc; keep each once
    uniq = list(dict.fromkeys(arcs))
    cost = sum(graph.edges[a, b][weight] for a, b in uniq)
    return SteinerResult(uniq, frozenset(terms) | {root}, cost, EXACT, root, {"dp_cost": dp[full][r]})
