"""Metric k-stroll instances and service-chain walks.

The metric instance is a complete graph over ``{source} | VMs``.  An edge
carries the shortest-path connection cost between its endpoints plus a share
of the setup costs, arranged so that a simple path with ``k`` nodes from the
source to the last VM costs exactly the setup of its ``k - 1`` VMs plus the
connection cost of the concatenated shortest paths.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional

from .core import (
    InfeasibleError,
    ServiceWalk,
    ShortestPaths,
    SofInstance,
    node_key,
    sorted_nodes,
)

PLAIN = "plain"
SOURCE_COST = "source_cost"

# exact subset DP is used while the number of (subset, last) states stays below this
EXACT_STATE_LIMIT = 250_000


@dataclass
class MetricInstance:
    source: object
    last_vm: object
    nodes: list
    costs: dict
    provenance: dict
    variant: str = PLAIN

    def cost(self, a, b) -> float:
        if a == b:
            return 0.0
        return self.costs[_pair(a, b)]

    def path(self, a, b) -> list:
        """Underlying network path from ``a`` to ``b``."""
        p = self.provenance[_pair(a, b)]
        return list(p) if p[0] == a else list(reversed(p))

    def triangle_violations(self, tol: float = 1e-9) -> list:
        bad = []
        for a, b, c in itertools.permutations(self.nodes, 3):
            if self.cost(a, c) > self.cost(a, b) + self.cost(b, c) + tol:
                bad.append((a, b, c))
        return bad


@dataclass(frozen=True)
class StrollWalk:
    nodes: tuple
    cost: float

    @property
    def endpoints(self) -> tuple:
        return self.nodes[0], self.nodes[-1]


def _pair(a, b) -> tuple:
    return (a, b) if node_key(a) <= node_key(b) else (b, a)


def build_metric_instance(
    instance: SofInstance,
    last_vm,
    variant: str = PLAIN,
    source=None,
    paths: Optional[ShortestPaths] = None,
) -> MetricInstance:
    net = instance.network
    if source is None:
        if len(instance.sources) != 1:
            raise ValueError("source must be given when the instance has several sources")
        (source,) = instance.sources
    if variant not in (PLAIN, SOURCE_COST):
        raise ValueError(f"unknown variant {variant!r}")
    if last_vm not in net or not net.is_vm(last_vm):
        raise ValueError(f"{last_vm} is not a VM")
    paths = paths or ShortestPaths(net)
    nodes = sorted_nodes(set(net.vms) | {source})
    s, u = source, last_vm
    cs = instance.source_cost(s) if variant == SOURCE_COST else 0.0
    setup = net.setup
    costs, prov = {}, {}
    for a, b in itertools.combinations(nodes, 2):
        a, b = _pair(a, b)
        p = paths.path(a, b)
        if p is None:
            missing = b if a in (s, u) else a
            raise InfeasibleError(f"VM {missing} is unreachable from {a if missing == b else b}")
        sp = paths.cost(a, b)
        if variant == PLAIN:
            if s in (a, b):
                other = b if a == s else a
                share = (setup(u) + setup(other)) / 2
            else:
                share = (setup(a) + setup(b)) / 2
        else:
            share = _source_cost_share(a, b, s, u, cs, setup)
        costs[(a, b)] = sp + share
        prov[(a, b)] = tuple(p)
    return MetricInstance(s, u, nodes, costs, prov, variant)


def _source_cost_share(a, b, s, u, cs, setup) -> float:
    if {a, b} == {s, u}:
        return cs + setup(u)
    if s in (a, b):
        other = b if a == s else a
        return (cs + setup(u) + setup(other)) / 2
    if u in (a, b):
        other = b if a == u else a
        return (setup(other) + cs + setup(u)) / 2
    return (setup(a) + setup(b)) / 2


# ---------------------------------------------------------------------------
# path search with exactly k nodes


def _exact_paths(start, candidates: list, k: int, edge: Callable, ends: list) -> dict:
    """Minimum-cost simple paths with exactly ``k`` nodes from ``start``.

    Returns ``{end: (cost, nodes)}``; ties resolve to the lexicographically
    smallest node sequence.
    """
    keyed = {x: node_key(x) for x in candidates}
    keyed[start] = node_key(start)
    if k == 1:
        return {start: (0.0, (start,))} if start in ends else {}
    # (chosen, last) -> (cost, key sequence, node sequence); tuples order ties
    level = {(frozenset(), start): (0.0, (keyed[start],), (start,))}
    for _ in range(k - 2):
        nxt = {}
        for (chosen, last), (cost, ks, seq) in level.items():
            for x in candidates:
                if x in chosen:
                    continue
                cand = (cost + edge(last, x), ks + (keyed[x],), seq + (x,))
                key = (chosen | {x}, x)
                cur = nxt.get(key)
                if cur is None or cand[:2] < cur[:2]:
                    nxt[key] = cand
        level = nxt
    best: dict = {}
    end_set = set(ends) - {start}
    for (chosen, last), (cost, ks, seq) in level.items():
        for end in end_set:
            if end in chosen:
                continue
            cand = (cost + edge(last, end), ks + (keyed[end],), seq + (end,))
            cur = best.get(end)
            if cur is None or cand[:2] < cur[:2]:
                best[end] = cand
    return {e: (c, seq) for e, (c, _, seq) in best.items()}


def _state_count(m: int, k: int) -> int:
    return sum(comb(m, t) * t for t in range(1, max(k - 1, 1)))


def _heuristic_path(start, end, candidates: list, k: int, edge: Callable) -> Optional[tuple]:
    """Cheapest insertion followed by swap / relocation / reversal moves."""
    pool = [x for x in candidates if x not in (start, end)]
    if len(pool) < k - 2:
        return None
    seq = [start, end]

    def total(s):
        return sum(edge(a, b) for a, b in zip(s, s[1:]))

    while len(seq) < k:
        best = None
        for x in pool:
            if x in seq:
                continue
            for i in range(1, len(seq)):
                delta = edge(seq[i - 1], x) + edge(x, seq[i]) - edge(seq[i - 1], seq[i])
                if best is None or delta < best[0] - 1e-12:
                    best = (delta, i, x)
        _, i, x = best
        seq.insert(i, x)

    cur = total(seq)
    improved = True
    rounds = 0
    while improved and rounds < 50:
        improved = False
        rounds += 1
        # swap an interior node for an unused one
        for i in range(1, len(seq) - 1):
            for x in pool:
                if x in seq:
                    continue
                cand = seq[:i] + [x] + seq[i + 1 :]
                c = total(cand)
                if c < cur - 1e-12:
                    seq, cur, improved = cand, c, True
        # relocate an interior node
        for i in range(1, len(seq) - 1):
            for j in range(1, len(seq) - 1):
                if i == j:
                    continue
                cand = seq[:i] + seq[i + 1 :]
                cand.insert(j, seq[i])
                c = total(cand)
                if c < cur - 1e-12:
                    seq, cur, improved = cand, c, True
        # reverse an interior segment
        for i in range(1, len(seq) - 2):
            for j in range(i + 1, len(seq) - 1):
                cand = seq[:i] + seq[i : j + 1][::-1] + seq[j + 1 :]
                c = total(cand)
                if c < cur - 1e-12:
                    seq, cur, improved = cand, c, True
    return cur, tuple(seq)


def solve_kstroll(mi: MetricInstance, k: int, mode: str = "auto") -> StrollWalk:
    """Cheapest walk from the source to the last VM visiting ``k`` distinct nodes.

    In a metric graph an optimal walk can be shortcut to a simple path with
    exactly ``k`` nodes, which is what both modes return.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(mi.nodes):
        raise InfeasibleError(f"k={k} exceeds the {len(mi.nodes)} nodes of the metric instance")
    s, u = mi.source, mi.last_vm
    if s == u:
        raise InfeasibleError("last VM coincides with the source")
    cands = [x for x in mi.nodes if x not in (s, u)]
    if mode == "auto":
        mode = "exact" if _state_count(len(cands), k) <= EXACT_STATE_LIMIT else "heuristic"
    if mode == "exact":
        res = _exact_paths(s, cands + [u], k, mi.cost, [u])
        if u not in res:
            raise InfeasibleError(f"no {k}-node walk from {s} to {u}")
        cost, seq = res[u]
    elif mode == "heuristic":
        res = _heuristic_path(s, u, cands, k, mi.cost)
        if res is None:
            raise InfeasibleError(f"no {k}-node walk from {s} to {u}")
        cost, seq = res
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return StrollWalk(tuple(seq), cost)


def lift_walk(mi: MetricInstance, sw: StrollWalk, instance: SofInstance | None = None) -> ServiceWalk:
    """Concatenate the provenance paths and mark f_1.. on the visited VMs."""
    if sw.endpoints != (mi.source, mi.last_vm):
        raise ValueError("stroll walk endpoints do not match the metric instance")
    return chain_walk(sw.nodes, mi.path)


def chain_walk(stops, path_fn: Callable) -> ServiceWalk:
    """Walk through ``stops``; every stop after the first runs the next VNF."""
    nodes = [stops[0]]
    marks = [None]
    for idx, (a, b) in enumerate(zip(stops, stops[1:]), start=1):
        p = path_fn(a, b)
        nodes.extend(p[1:])
        marks.extend([None] * (len(p) - 2) + [idx])
    return ServiceWalk(tuple(nodes), tuple(marks))


# ---------------------------------------------------------------------------
# batched chains: one source, every candidate last VM


@dataclass
class ChainTable:
    """Cheapest chain from one source to each last VM."""

    source: object
    chain_len: int
    best: dict = field(default_factory=dict)  # last VM -> (cost, stops)

    def stops(self, u) -> tuple:
        return self.best[u][1]

    def cost(self, u) -> float:
        return self.best[u][0]


def chain_table(
    paths: ShortestPaths,
    source,
    vms: list,
    chain_len: int,
    setup: Callable,
    source_cost: float = 0.0,
    ends: Optional[list] = None,
    mode: str = "auto",
) -> ChainTable:
    """Solve every last-VM k-stroll instance for ``source`` at once.

    The metric edge costs telescope to ``sum(sp) + sum(setup)`` along a path,
    so one subset DP rooted at the source answers all last VMs.
    """
    cands = [v for v in vms if v != source and paths.dist(source, v) < math.inf]
    ends = cands if ends is None else [u for u in ends if u in cands]
    k = chain_len + 1

    memo: dict = {}

    def edge(a, b):
        w = memo.get((a, b))
        if w is None:
            w = memo[(a, b)] = paths.cost(a, b) + setup(b)
        return w

    table = ChainTable(source, chain_len)
    if mode == "auto":
        mode = "exact" if _state_count(len(cands), k) <= EXACT_STATE_LIMIT else "heuristic"
    if mode == "exact":
        found = _exact_paths(source, cands, k, edge, ends)
    else:
        found = {}
        for u in ends:
            r = _heuristic_path(source, u, cands, k, edge)
            if r is not None:
                found[u] = r
    for u, (cost, seq) in found.items():
        table.best[u] = (cost + source_cost, seq)
    return table
