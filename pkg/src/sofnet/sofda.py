"""Service overlay forest deployment: single-source and general algorithms."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx

from .core import (
    GraphPaths,
    InfeasibleError,
    ServiceForest,
    ServiceWalk,
    ShortestPaths,
    SofInstance,
    forest_cost,
    node_key,
    path_cost,
    sorted_nodes,
    trace_sources,
)
from .kstroll import chain_table, chain_walk
from .steiner import _orient, prune_leaves, steiner_approx

log = logging.getLogger(__name__)

AUX = "~aux"
ROOT = (AUX, "root")

ATTACH_INCOMING_VIA_U = "attach_incoming_via_u"
ATTACH_INCOMING_VIA_W = "attach_incoming_via_w"
ATTACH_RESIDENT_VIA_U = "attach_resident_via_u"
FALLBACK = "fallback"


def source_hat(s) -> tuple:
    return (AUX, "s", s)


def vm_hat(u) -> tuple:
    return (AUX, "m", u)


def is_aux(x) -> bool:
    return isinstance(x, tuple) and len(x) >= 2 and x[0] == AUX


# ---------------------------------------------------------------------------
# single source


def tree_forest(chain_len, walk: ServiceWalk, tree_edges, served) -> ServiceForest:
    f = ServiceForest(chain_len)
    f.add_walk(walk)
    for a, b in tree_edges:
        f.arcs.add(((a, chain_len), (b, chain_len)))
    f.served = dict(served)
    return f


def sofda_ss(instance: SofInstance, source=None, paths=None, mode: str = "auto") -> ServiceForest:
    """Best chain-plus-tree over every candidate last VM."""
    if source is None:
        if len(instance.sources) != 1:
            raise ValueError("source must be given when the instance has several sources")
        (source,) = instance.sources
    if source not in instance.network:
        raise InfeasibleError(f"unknown source {source}")
    instance.check_feasible()
    net = instance.network
    C = instance.chain_len
    paths = paths or ShortestPaths(net)
    dests = sorted_nodes(instance.destinations)
    for d in dests:
        if paths.dist(source, d) == math.inf:
            raise InfeasibleError(f"destination {d} is unreachable from {source}")
    table = chain_table(paths, source, net.vms, C, net.setup, instance.source_cost(source), mode=mode)
    if not table.best:
        raise InfeasibleError(f"fewer than {C} VMs reachable from {source}")
    best = None
    for u in sorted_nodes(table.best):
        chain_cost, stops = table.best[u]
        if best is not None and chain_cost >= best[0]:
            continue
        tree = steiner_approx(paths, u, dests)
        total = chain_cost + tree.cost
        if best is None or total < best[0] - 1e-12:
            best = (total, u, stops, tree)
    total, u, stops, tree = best
    walk = chain_walk(stops, paths.path)
    forest = tree_forest(C, walk, tree.edges, {d: source for d in dests})
    forest.meta.update({"algorithm": "sofda-ss", "last_vm": u, "estimate": total})
    return forest


# ---------------------------------------------------------------------------
# auxiliary Steiner instance


@dataclass
class VirtualEdge:
    source: object
    last_vm: object
    stops: tuple
    walk: ServiceWalk
    cost: float


@dataclass
class AuxGraph:
    graph: nx.Graph
    root: tuple
    sources: list
    vms: list
    virtual: dict = field(default_factory=dict)  # (s, u) -> VirtualEdge
    warnings: list = field(default_factory=list)

    def edge_count(self) -> int:
        return self.graph.number_of_edges()


def build_aux_graph(instance: SofInstance, paths=None, mode: str = "auto") -> AuxGraph:
    net = instance.network
    paths = paths or ShortestPaths(net)
    C = instance.chain_len
    g = nx.Graph()
    for a, b, c in net.edges():
        g.add_edge(a, b, cost=c)
    g.add_nodes_from(net.nodes)
    sources = sorted_nodes(instance.sources)
    vms = net.vms
    aux = AuxGraph(g, ROOT, sources, vms)
    g.add_node(ROOT)
    for s in sources:
        g.add_edge(ROOT, source_hat(s), cost=0.0)
    for u in vms:
        g.add_edge(vm_hat(u), u, cost=0.0)
    for s in sources:
        table = chain_table(paths, s, vms, C, net.setup, instance.source_cost(s), mode=mode)
        for u in vms:
            if u not in table.best:
                if u != s:
                    aux.warnings.append(f"no {C}-VM chain from {s} to {u}; virtual edge omitted")
                continue
            cost, stops = table.best[u]
            walk = chain_walk(stops, paths.path)
            aux.virtual[(s, u)] = VirtualEdge(s, u, stops, walk, cost)
            g.add_edge(source_hat(s), vm_hat(u), cost=cost)
    for w in aux.warnings:
        log.debug(w)
    return aux


class AuxShortestPaths:
    """Shortest paths in the auxiliary graph on top of a provider for G.

    Distances are computed on a small overlay holding the virtual nodes, the
    VMs and the ``extra`` network nodes, joined by G-distance shortcuts;
    returned paths expand every shortcut with the G provider.
    """

    def __init__(self, aux: AuxGraph, g_paths, extra=()):
        self.aux = aux
        self.g_paths = g_paths
        ov = nx.Graph()
        for a, b, d in aux.graph.edges(data=True):
            if is_aux(a) or is_aux(b):
                ov.add_edge(a, b, cost=d["cost"], shortcut=False)
        keys = sorted_nodes(set(aux.vms) | set(extra))
        for i, a in enumerate(keys):
            ov.add_node(a)
            for b in keys[i + 1 :]:
                c = g_paths.dist(a, b)
                if c < math.inf:
                    ov.add_edge(a, b, cost=c, shortcut=True)
        self.overlay = ov
        self._ov_paths = GraphPaths(ov, "cost")
        self._cache: dict = {}

    def __contains__(self, node) -> bool:
        return node in self.overlay

    def weight(self, a, b) -> float:
        if is_aux(a) or is_aux(b):
            return self.aux.graph.edges[a, b]["cost"]
        return self.g_paths.weight(a, b)

    def dist(self, a, b) -> float:
        return self._ov_paths.dist(a, b)

    def path(self, a, b):
        key = (a, b)
        if key not in self._cache:
            ov = self._ov_paths.path(a, b)
            if ov is None:
                self._cache[key] = None
            else:
                out = [ov[0]]
                for x, y in zip(ov, ov[1:]):
                    if self.overlay.edges[x, y]["shortcut"]:
                        out.extend(self.g_paths.path(x, y)[1:])
                    else:
                        out.append(y)
                self._cache[key] = out
        return self._cache[key]

    def cost(self, a, b) -> float:
        p = self.path(a, b)
        return math.inf if p is None else path_cost(p, self.weight)


# ---------------------------------------------------------------------------
# conflict resolution


@dataclass
class ConflictRecord:
    incoming: int
    resident: int
    vm: object
    i: int
    j: int
    case: str
    w: object = None
    h: Optional[int] = None
    chosen_by: str = "rule"


@dataclass
class ConflictReport:
    records: list = field(default_factory=list)
    cost_before: float = 0.0
    cost_after: float = 0.0
    shortened: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def cases(self) -> list:
        return [r.case for r in self.records]


def _marks_by_node(walks) -> dict:
    out: dict = {}
    for wid, w in enumerate(walks):
        for pos, n, m in w.marked():
            out.setdefault(n, []).append((wid, pos, m))
    return out


def _has_conflict(walks) -> bool:
    for entries in _marks_by_node(walks).values():
        if len({m for _, _, m in entries}) > 1:
            return True
    return False


def _first_conflict(walks, a):
    """Backtrack walk ``a``; return (pos, node, j, resident, pos1, i) or None."""
    by_node = _marks_by_node(walks)
    w = walks[a]
    for pos, n, j in reversed(w.marked()):
        others = [(wid, p, m) for wid, p, m in by_node[n] if m != j]
        if not others:
            continue
        ext = [t for t in others if t[0] != a]
        if not ext:
            return (pos, n, j, a, None, None)
        wid, p, m = min(ext)
        return (pos, n, j, wid, p, m)
    return None


def _splice(prefix: ServiceWalk, q: int, suffix: ServiceWalk, p: int) -> ServiceWalk:
    """prefix[..q] followed by suffix[p+1..], keeping suffix marks above the prefix layer."""
    layer = prefix.layer_after(q)
    nodes = prefix.nodes[: q + 1] + suffix.nodes[p + 1 :]
    marks = prefix.vnfs[: q + 1] + tuple(m if m is not None and m > layer else None for m in suffix.vnfs[p + 1 :])
    return ServiceWalk(nodes, marks)


def _cost(instance, walks, base: ServiceForest) -> float:
    f = base.copy()
    f.walks = list(walks)
    return forest_cost(instance, f).total


def _shorten(walk: ServiceWalk, start: int, paths, instance, walks, wid, base) -> tuple:
    """Replace sub-walks after ``start`` between consecutive anchors by shortest paths."""
    anchors = [start] + [p for p, _, _ in walk.marked() if p > start]
    if anchors[-1] != len(walk) - 1:
        anchors.append(len(walk) - 1)
    count = 0
    cur = walk
    for k in range(len(anchors) - 1, 0, -1):
        a, b = anchors[k - 1], anchors[k]
        if b - a < 2:
            continue
        sp = paths.path(cur.nodes[a], cur.nodes[b])
        if sp is None or list(sp) == list(cur.nodes[a : b + 1]):
            continue
        nodes = cur.nodes[:a] + tuple(sp) + cur.nodes[b + 1 :]
        if len(sp) == 1:
            if cur.vnfs[a] is not None and cur.vnfs[b] is not None:
                continue
            merged = cur.vnfs[a] if cur.vnfs[a] is not None else cur.vnfs[b]
            vnfs = cur.vnfs[:a] + (merged,) + cur.vnfs[b + 1 :]
        else:
            vnfs = cur.vnfs[:a] + (cur.vnfs[a],) + (None,) * (len(sp) - 2) + cur.vnfs[b:]
        cand = ServiceWalk(nodes, vnfs)
        trial = list(walks)
        trial[wid] = cur
        before = _cost(instance, trial, base)
        trial[wid] = cand
        if _cost(instance, trial, base) < before - 1e-9:
            cur = cand
            count += 1
    return cur, count


def _candidates(walks, a, r, pu, q1, i, j) -> list:
    """Splices that remove the conflict at ``u``; the textbook choice comes first.

    Items are ``(case, target walk id, new walk, splice position, w, h)``.
    """
    others = walks
    W, W1 = walks[a], walks[r]
    out = []
    if j <= i:
        out.append((ATTACH_INCOMING_VIA_U, a, _splice(W1, q1, W, pu), q1, None, None))
    else:
        pos1 = {n: (p, m) for p, n, m in W1.marked()}
        best = None
        for pw, y, hw in W.marked():
            if pw == pu or y not in pos1:
                continue
            qw, h = pos1[y]
            if h != hw and h >= j and (best is None or h > best[0] or (h == best[0] and pw > best[1])):
                best = (h, pw, qw, y)
        if best is not None:
            h, pw, qw, y = best
            out.append((ATTACH_INCOMING_VIA_W, a, _splice(W1, qw, W, pw), qw, y, h))
        else:
            out.append((ATTACH_RESIDENT_VIA_U, r, _splice(W, pu, W1, q1), pu, None, None))
    # every other order-preserving splice at a shared node
    for q, x in enumerate(W1.nodes):
        for p, y in enumerate(W.nodes):
            if x == y and W.layer_after(p) >= W1.layer_after(q) and q >= q1:
                out.append((ATTACH_RESIDENT_VIA_U, r, _splice(W, p, W1, q), p, x, W.layer_after(p)))
    for b, R in enumerate(others):
        if b == a:
            continue
        for q, x in enumerate(R.nodes):
            for p in range(pu, len(W)):
                if W.nodes[p] == x and R.layer_after(q) >= W.layer_after(p):
                    tag = ATTACH_INCOMING_VIA_U if x == W.nodes[pu] else ATTACH_INCOMING_VIA_W
                    out.append((tag, a, _splice(R, q, W, p), q, x, R.layer_after(q)))
    # a walk whose terminal other walks already reach at the last layer can go
    for tag, t in ((ATTACH_INCOMING_VIA_U, a), (ATTACH_RESIDENT_VIA_U, r)):
        rest = [w for k, w in enumerate(walks) if k != t]
        g = nx.DiGraph()
        for w in rest:
            g.add_edges_from(w.arcs())
        end = (walks[t].terminal, walks[t].final_layer)
        if end in g:
            out.append((tag, t, None, 0, None, None))
    uniq, keys = [], set()
    for c in out:
        k = (c[1], c[2])
        if k not in keys:
            keys.add(k)
            uniq.append(c)
    return uniq


def resolve_conflicts(
    forest: ServiceForest,
    incoming: ServiceWalk,
    chain_len: int,
    instance: SofInstance | None = None,
    paths=None,
    max_rounds: int | None = None,
) -> tuple:
    """Add ``incoming`` to the forest and remove every VNF conflict it causes.

    Shortening of spliced walks needs ``instance`` and ``paths``; without
    them the spliced walks are kept verbatim.
    """
    out = forest.copy()
    walks = list(out.walks) + [incoming]
    rep = ConflictReport()
    base = forest.copy()
    base.walks = []
    if instance is not None:
        rep.cost_before = _cost(instance, walks, base)
    active = len(walks) - 1
    cap = max_rounds if max_rounds is not None else 4 * len(walks) + 8
    rounds = 0
    while _has_conflict(walks):
        rounds += 1
        if rounds > cap:
            break
        hit = _first_conflict(walks, active)
        if hit is None:
            active = next(a for a in range(len(walks) - 1, -1, -1) if _first_conflict(walks, a))
            continue
        pu, u, j, r, q1, i = hit
        if q1 is None:
            break  # the walk conflicts with itself; handled below
        cands = _candidates(walks, active, r, pu, q1, i, j)
        guard = instance is not None
        if guard:
            current = _cost(instance, walks, base)
        chosen = None
        for rank, (case, target, walk, start, w, h) in enumerate(cands):
            trial = list(walks)
            trial[target] = walk
            n = 0
            if walk is None:
                del trial[target]
            elif guard and paths is not None:
                trial[target], n = _shorten(walk, start, paths, instance, trial, target, base)
            c = _cost(instance, trial, base) if guard else 0.0
            if chosen is None or c < chosen[0] - 1e-9:
                chosen = (c, rank, case, trial, n, w, h)
            # the first candidate follows the textbook rule; stop if it is not worse
            if not guard or (rank == 0 and c <= current + 1e-9):
                break
        c, rank, case, trial, n, w, h = chosen
        rep.shortened += n
        rep.records.append(ConflictRecord(active, r, u, i, j, case, w, h, "rule" if rank == 0 else "guard"))
        if len(trial) < len(walks):
            dropped = cands[rank][1]
            if dropped == active:
                active = len(trial) - 1
            elif dropped < active:
                active -= 1
        walks = trial
    if _has_conflict(walks):
        walks = _fallback(forest, incoming, paths, rep)
    out.walks = walks
    if instance is not None:
        rep.cost_after = _cost(instance, walks, base)
    return out, rep


def _fallback(forest: ServiceForest, incoming: ServiceWalk, paths, rep: ConflictReport) -> list:
    """Keep the resident walks and reach the incoming terminal at the last layer."""
    walks = list(forest.walks)
    if paths is None:
        raise RuntimeError("conflict resolution fell back but no path provider was given")
    v = incoming.terminal
    best = None
    for wid, w in enumerate(walks):
        if w.final_layer != forest.chain_len:
            continue
        c = paths.dist(w.terminal, v)
        if best is None or c < best[0]:
            best = (c, wid)
    if best is None:
        raise RuntimeError("no complete resident walk to attach to")
    wid = best[1]
    w = walks[wid]
    sp = paths.path(w.terminal, v)
    walks.append(ServiceWalk(w.nodes + tuple(sp[1:]), w.vnfs + (None,) * (len(sp) - 1)))
    rep.records.append(ConflictRecord(len(walks) - 1, wid, v, forest.chain_len, forest.chain_len, FALLBACK))
    return walks


# ---------------------------------------------------------------------------
# general algorithm


def _clean_tree(edges, root, dests) -> list:
    """Hang every source duplicate from the virtual root and prune dead branches.

    Swapping a duplicate's parent link for its zero-cost root link keeps the
    tree connected and never raises its cost.
    """
    und = {_key(a, b) for a, b in edges}
    for parent, x in _orient(sorted(und, key=node_key), root):
        if is_aux(x) and x[1] == "s" and parent != root:
            und.discard(_key(parent, x))
            und.add(_key(root, x))
    kept = prune_leaves(sorted(und, key=node_key), set(dests) | {root})
    return _orient(kept, root)


def _key(a, b) -> tuple:
    return (a, b) if node_key(a) <= node_key(b) else (b, a)


def sofda(instance: SofInstance, g_paths=None, mode: str = "auto") -> ServiceForest:
    """General algorithm over the auxiliary Steiner instance."""
    instance.check_feasible()
    C = instance.chain_len
    dests = sorted_nodes(instance.destinations)
    if not dests:
        return ServiceForest(C, meta={"algorithm": "sofda"})
    net = instance.network
    g_paths = g_paths or ShortestPaths(net)
    aux = build_aux_graph(instance, g_paths, mode)
    if not aux.virtual:
        raise InfeasibleError(f"no source reaches {C} VMs")
    ap = AuxShortestPaths(aux, g_paths, extra=dests)
    for d in dests:
        if ap.dist(ROOT, d) == math.inf:
            raise InfeasibleError(f"destination {d} cannot be reached by any service chain")
    tree = steiner_approx(ap, ROOT, dests)
    arcs = _clean_tree(tree.edges, ROOT, dests)

    forest = ServiceForest(C)
    reports = []
    chosen = sorted(
        ((a[2], b[2]) for a, b in arcs if is_aux(a) and is_aux(b) and a[1] == "s" and b[1] == "m"),
        key=node_key,
    )
    for s, u in chosen:
        walk = aux.virtual[(s, u)].walk
        forest, rep = resolve_conflicts(forest, walk, C, instance, g_paths)
        if rep.records:
            reports.append(rep)
    for a, b in arcs:
        if not is_aux(a) and not is_aux(b):
            forest.arcs.add(((a, C), (b, C)))
    owner = trace_sources(instance, forest.graph())
    forest.served = {d: owner.get((d, C)) for d in dests}
    forest.meta.update(
        {
            "algorithm": "sofda",
            "steiner_cost": tree.cost,
            "chains": chosen,
            "conflicts": reports,
            "warnings": list(aux.warnings),
        }
    )
    return forest
