"""Tree-first comparison heuristics: ST, eST and eNEMP.

All three build a Steiner tree over the destinations and then hang a service
chain off it.  eST attaches the cheapest chain through a shortest path to
the tree; eNEMP requires the chain to end at a VM already on the tree and
regrows the tree from that VM.  With ``multi_source`` on, further trees
rooted at unused sources are added one at a time while they lower the total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import InfeasibleError, ServiceForest, ShortestPaths, SofInstance, forest_cost, sorted_nodes
from .kstroll import chain_table, chain_walk
from .sofda import tree_forest
from .steiner import _orient, prune_leaves, steiner_approx

ST = "ST"
EST = "eST"
ENEMP = "eNEMP"
ALGORITHMS = (ST, EST, ENEMP)


@dataclass(frozen=True)
class BaselineConfig:
    algorithm: str = EST
    multi_source: bool = True

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown baseline {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")


@dataclass
class ServiceTree:
    source: object
    last_vm: object
    stops: tuple
    tree_edges: list  # oriented away from the last VM
    dests: list
    estimate: float
    meta: dict = field(default_factory=dict)


def _tree_from(paths, root, dests) -> tuple:
    t = steiner_approx(paths, root, dests)
    return t.edges, t.cost


def _est_tree(paths, s, dests, table) -> ServiceTree | None:
    tree = steiner_approx(paths, s, dests)
    nodes = sorted_nodes(tree.nodes)
    best = None
    for u in sorted_nodes(table.best):
        dist_u = paths.distances_to(u)
        t = min(nodes, key=lambda x: (dist_u.get(x, math.inf), nodes.index(x)))
        attach = dist_u.get(t, math.inf)
        if attach == math.inf:
            continue
        c = table.cost(u) + attach
        if best is None or c < best[0] - 1e-12:
            best = (c, u, t)
    if best is None:
        return None
    _, u, t = best
    link = paths.path(u, t)
    edges = list(tree.edges) + list(zip(link, link[1:]))
    edges = _orient(prune_leaves(edges, set(dests) | {u}), u)
    cost = sum(paths.weight(a, b) for a, b in edges)
    return ServiceTree(s, u, table.stops(u), edges, list(dests), table.cost(u) + cost)


def _enemp_tree(paths, s, dests, table) -> ServiceTree | None:
    tree = steiner_approx(paths, s, dests)
    nodes = tree.nodes
    # a VM hanging off a tree node by a free link counts as on the tree
    on_tree = [u for u in sorted_nodes(table.best) if min(paths.dist(u, x) for x in nodes) == 0]
    if not on_tree:
        st = _est_tree(paths, s, dests, table)
        if st is not None:
            st.meta["fallback"] = EST
        return st
    best = None
    for u in on_tree:
        edges, c = _tree_from(paths, u, dests)
        total = table.cost(u) + c
        if best is None or total < best[0] - 1e-12:
            best = (total, u, edges)
    total, u, edges = best
    return ServiceTree(s, u, table.stops(u), list(edges), list(dests), total)


def _service_tree(instance, paths, s, dests, vms, algorithm, mode) -> ServiceTree | None:
    net = instance.network
    table = chain_table(paths, s, vms, instance.chain_len, net.setup, instance.source_cost(s), mode=mode)
    if not table.best:
        return None
    if algorithm == ENEMP:
        return _enemp_tree(paths, s, dests, table)
    return _est_tree(paths, s, dests, table)


def _assemble(instance, paths, trees) -> ServiceForest:
    C = instance.chain_len
    out = ServiceForest(C)
    for t in trees:
        f = tree_forest(C, chain_walk(t.stops, paths.path), t.tree_edges, {d: t.source for d in t.dests})
        out.walks.extend(f.walks)
        out.arcs |= f.arcs
        out.served.update(f.served)
    return out


def _rehome(instance, paths, trees) -> list:
    """Serve each destination from the tree whose last VM is closest, then regrow the trees."""
    dests = sorted_nodes(instance.destinations)
    share = {id(t): [] for t in trees}
    for d in dests:
        to_d = paths.distances_to(d)
        best = min(
            range(len(trees)),
            key=lambda k: (to_d.get(trees[k].last_vm, math.inf), k),
        )
        share[id(trees[best])].append(d)
    out = []
    for t in trees:
        mine = share[id(t)]
        if not mine:
            continue
        if mine == t.dests:
            out.append(t)
            continue
        edges, c = _tree_from(paths, t.last_vm, mine)
        chain = t.estimate - sum(paths.weight(a, b) for a, b in t.tree_edges)
        out.append(ServiceTree(t.source, t.last_vm, t.stops, list(edges), mine, chain + c, dict(t.meta)))
    return out


def run_baseline(instance: SofInstance, config: BaselineConfig = BaselineConfig(), paths=None, mode: str = "auto") -> ServiceForest:
    """Run one of the tree-first heuristics; see the module docstring."""
    algorithm = config.algorithm
    multi = config.multi_source and algorithm != ST
    C = instance.chain_len
    dests = sorted_nodes(instance.destinations)
    if not dests:
        f = ServiceForest(C)
        f.meta.update({"algorithm": algorithm, "iterations": [0.0]})
        return f
    instance.check_feasible()
    paths = paths or ShortestPaths(instance.network)
    vms = instance.network.vms

    # the first tree goes to the source with the cheapest Steiner tree; the
    # chain is chosen afterwards
    ranked = []
    for s in sorted_nodes(instance.sources):
        if any(paths.dist(s, d) == math.inf for d in dests):
            continue
        ranked.append((steiner_approx(paths, s, dests).cost, len(ranked), s))
    first = None
    for _, _, s in sorted(ranked):
        first = _service_tree(instance, paths, s, dests, vms, algorithm, mode)
        if first is not None:
            break
    if first is None:
        raise InfeasibleError("no source reaches every destination with a complete chain")
    trees = [first]
    forest = _assemble(instance, paths, trees)
    history = [forest_cost(instance, forest).total]

    while multi:
        used_sources = {t.source for t in trees}
        used_vms = {x for t in trees for x in t.stops[1:]}
        free = [v for v in vms if v not in used_vms]
        elected = None
        for s in sorted_nodes(instance.sources - used_sources):
            if any(paths.dist(s, d) == math.inf for d in dests):
                continue
            t = _service_tree(instance, paths, s, dests, free, algorithm, mode)
            if t is not None and (elected is None or t.estimate < elected.estimate - 1e-12):
                elected = t
        if elected is None:
            break
        trial = _rehome(instance, paths, trees + [elected])
        if not any(t is elected or t.source == elected.source for t in trial):
            break
        cand = _assemble(instance, paths, trial)
        c = forest_cost(instance, cand).total
        if c >= history[-1] - 1e-9:
            break
        trees, forest = trial, cand
        history.append(c)

    forest.meta.update(
        {
            "algorithm": algorithm,
            "iterations": history,
            "sources": [t.source for t in trees],
            "fallback": [t.source for t in trees if t.meta.get("fallback")],
        }
    )
    return forest


def run_st(instance: SofInstance, **kw) -> ServiceForest:
    return run_baseline(instance, BaselineConfig(ST, False), **kw)


def run_est(instance: SofInstance, multi_source: bool = True, **kw) -> ServiceForest:
    return run_baseline(instance, BaselineConfig(EST, multi_source), **kw)


def run_enemp(instance: SofInstance, multi_source: bool = True, **kw) -> ServiceForest:
    return run_baseline(instance, BaselineConfig(ENEMP, multi_source), **kw)
