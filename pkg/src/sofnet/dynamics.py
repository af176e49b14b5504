"""Keep a deployed forest current as destinations, VNFs and loads change.

The deployed forest is kept as a clone-space arborescence: one parent per
clone, rooted at source clones ``(s, 0)``, with every leaf a destination at
the last layer.  A *segment* is a maximal same-layer subtree; its head is a
source root or the head of a VNF arc and its tails are the clones where a
VNF arc leaves the layer (or destinations, on the last layer).
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import (
    DEFAULT_COST_MODEL,
    CostModelParams,
    InfeasibleError,
    Network,
    ServiceForest,
    ServiceWalk,
    ShortestPaths,
    SofInstance,
    StructureError,
    element_cost,
    forest_cost,
    node_key,
    parse_node,
    sorted_nodes,
    trace_sources,
)
from .kstroll import chain_table, chain_walk
from .steiner import steiner_approx

log = logging.getLogger(__name__)

DEFAULT_DEMAND = 5.0
EPS = 1e-9


def _edge(a, b) -> tuple:
    return (a, b) if node_key(a) <= node_key(b) else (b, a)


def _with(instance: SofInstance, **kw) -> SofInstance:
    args = dict(
        network=instance.network,
        sources=instance.sources,
        destinations=instance.destinations,
        chain_len=instance.chain_len,
        source_setup_costs=instance.source_setup_costs,
    )
    args.update(kw)
    return SofInstance(**args)


# ---------------------------------------------------------------------------
# arborescence helpers


def _prune(arcs: set, keep: set) -> set:
    arcs = set(arcs)
    while True:
        tails = {a for a, _ in arcs}
        leaves = {b for _, b in arcs if b not in tails and b not in keep}
        if not leaves:
            return arcs
        arcs = {(a, b) for a, b in arcs if b not in leaves}


def normalize(instance: SofInstance, arcs) -> set:
    """BFS arborescence of ``arcs`` from the source roots, dead branches pruned."""
    succ: dict = {}
    for a, b in arcs:
        succ.setdefault(a, []).append(b)
    seen, q, tree = set(), deque(), set()
    for s in sorted_nodes(instance.sources):
        c = (s, 0)
        if c in succ and c not in seen:
            seen.add(c)
            q.append(c)
    while q:
        c = q.popleft()
        for n in sorted(succ.get(c, ()), key=node_key):
            if n not in seen:
                seen.add(n)
                tree.add((c, n))
                q.append(n)
    keep = {(d, instance.chain_len) for d in instance.destinations}
    return _prune(tree, keep)


def _forest(instance: SofInstance, arcs: set) -> ServiceForest:
    f = ServiceForest(instance.chain_len, [], set(arcs))
    owner = trace_sources(instance, f.graph())
    C = instance.chain_len
    f.served = {d: owner[(d, C)] for d in sorted_nodes(instance.destinations) if (d, C) in owner}
    return f


def _cost(instance: SofInstance, arcs) -> float:
    return forest_cost(instance, ServiceForest(instance.chain_len, [], set(arcs))).total


def _parents(arcs) -> dict:
    return {b: a for a, b in arcs}


def _succ(arcs) -> dict:
    out: dict = {}
    for a, b in arcs:
        out.setdefault(a, []).append(b)
    return out


def _head_of(parents: dict, clone) -> tuple:
    c = clone
    while c in parents and parents[c][1] == c[1] and parents[c][0] != c[0]:
        c = parents[c]
    return c


def _segment(succ: dict, head) -> tuple:
    """Link arcs and clones of the same-layer subtree below ``head``."""
    links, clones, stack = set(), {head}, [head]
    while stack:
        c = stack.pop()
        for n in succ.get(c, ()):
            if n[1] == c[1] and n[0] != c[0] and n not in clones:
                links.add((c, n))
                clones.add(n)
                stack.append(n)
    return links, clones


def _tails(succ: dict, clones, instance: SofInstance) -> list:
    C = instance.chain_len
    out = []
    for c in clones:
        if any(n[0] == c[0] and n[1] == c[1] + 1 for n in succ.get(c, ())):
            out.append(c)
        elif c[1] == C and c[0] in instance.destinations:
            out.append(c)
    return sorted(out, key=node_key)


def _layer_arcs(nodes, layer) -> set:
    return {((a, layer), (b, layer)) for a, b in zip(nodes, nodes[1:])}


def _reroute(instance, arcs, head, paths) -> tuple:
    """Replace the segment below ``head`` by a Steiner tree if that is cheaper."""
    succ = _succ(arcs)
    links, clones = _segment(succ, head)
    tails = _tails(succ, clones, instance)
    if not tails:
        return arcs, False
    L = head[1]
    tree = steiner_approx(paths, head[0], [t[0] for t in tails])
    new = (set(arcs) - links) | {((a, L), (b, L)) for a, b in tree.edges}
    new = normalize(instance, new)
    if _cost(instance, new) < _cost(instance, arcs) - EPS:
        return new, True
    return arcs, False


# ---------------------------------------------------------------------------
# state


@dataclass
class DeploymentState:
    """One deployed forest plus the load it and earlier requests put on the network.

    ``base_edge_load`` / ``base_vm_load`` hold load not caused by the current
    forest (earlier requests, external congestion); the forest adds
    ``demand`` per link arc and per hosted VNF.
    """

    instance: SofInstance
    forest: ServiceForest
    demand: float = DEFAULT_DEMAND
    params: CostModelParams = DEFAULT_COST_MODEL
    base_edge_load: dict = field(default_factory=dict)
    base_vm_load: dict = field(default_factory=dict)
    log: list = field(default_factory=list)
    committed: list = field(default_factory=list)

    @classmethod
    def deploy(
        cls,
        instance: SofInstance,
        forest: Optional[ServiceForest] = None,
        solver: Optional[Callable] = None,
        demand: float = DEFAULT_DEMAND,
        params: CostModelParams = DEFAULT_COST_MODEL,
    ) -> "DeploymentState":
        if forest is None:
            if solver is None:
                from .sofda import sofda as solver
            forest = solver(instance)
        arcs = normalize(instance, forest.all_arcs())
        st = cls(instance, _forest(instance, arcs), demand, params)
        g = instance.network.graph
        for u, v, d in g.edges(data=True):
            if d.get("load"):
                st.base_edge_load[_edge(u, v)] = float(d["load"])
        for v in instance.network.vms:
            if g.nodes[v].get("load"):
                st.base_vm_load[v] = float(g.nodes[v]["load"])
        return st

    @property
    def arcs(self) -> set:
        return set(self.forest.arcs)

    def cost(self) -> float:
        return forest_cost(self.instance, self.forest).total

    def edge_loads(self) -> dict:
        out = dict(self.base_edge_load)
        for (a, _), (b, _) in self.forest.link_arcs():
            e = _edge(a, b)
            out[e] = out.get(e, 0.0) + self.demand
        return out

    def vm_loads(self) -> dict:
        out = dict(self.base_vm_load)
        for v, ix in self.forest.vnf_assignments().items():
            out[v] = out.get(v, 0.0) + self.demand * len(ix)
        return out

    def _install(self, instance: SofInstance, arcs: set) -> None:
        self.instance = instance
        self.forest = _forest(instance, arcs)

    def _record(self, kind, args, before, notes=None, **extra) -> None:
        entry = {"event": kind, "args": list(args), "cost_before": before, "cost_after": self.cost()}
        entry["notes"] = list(notes or [])
        entry.update(extra)
        self.log.append(entry)


def refresh_costs(state: DeploymentState, increment: float = 0.0) -> Network:
    """Recompute every link and VM cost from its load and capacity.

    ``increment`` is added to every load first, pricing elements as they
    would be after carrying one more demand.  The new network is installed
    in ``state`` and returned.
    """
    net = state.instance.network
    el, vl = state.edge_loads(), state.vm_loads()
    edge_costs, setup = {}, {}
    for u, v, d in net.graph.edges(data=True):
        cap = d.get("capacity")
        if cap is None:
            raise ValueError(f"link ({u}, {v}) has no capacity")
        edge_costs[(u, v)] = element_cost(el.get(_edge(u, v), 0.0) + increment, cap, state.params)
    for v in net.vms:
        cap = net.graph.nodes[v].get("capacity")
        if cap is None:
            raise ValueError(f"VM {v} has no capacity")
        setup[v] = element_cost(vl.get(v, 0.0) + increment, cap, state.params)
    new = net.with_costs(edge_costs, setup)
    state.instance = state.instance.with_network(new)
    return new


# ---------------------------------------------------------------------------
# destinations


def handle_leave(state: DeploymentState, d) -> DeploymentState:
    inst = state.instance
    before = state.cost()
    if d not in inst.destinations:
        log.warning("destination %s is not in the forest; ignoring leave", d)
        state._record("leave", [d], before, [f"{d} is not a destination"])
        return state
    clone = (d, inst.chain_len)
    leaf = clone not in _succ(state.arcs)
    new_inst = _with(inst, destinations=inst.destinations - {d})
    arcs = normalize(new_inst, state.arcs)
    state._install(new_inst, arcs)
    state._record("leave", [d], before, [] if leaf else [f"{d} keeps relaying to its subtree"], leaf=leaf)
    return state


def join_options(state: DeploymentState, v, paths=None) -> list:
    """``(cost, clone, stops)`` for every forest clone that could serve ``v``."""
    inst = state.instance
    net = inst.network
    C = inst.chain_len
    paths = paths or ShortestPaths(net)
    arcs = state.arcs
    clones = {c for a in arcs for c in a} or {(s, 0) for s in inst.sources}
    used = set(state.forest.vnf_assignments())
    free = [m for m in net.vms if m not in used]
    tables: dict = {}
    out = []
    for u, f in sorted(clones, key=node_key):
        if f == C:
            out.append((paths.dist(u, v), (u, f), (u,)))
            continue
        t = tables.get((u, C - f))
        if t is None:
            t = tables[(u, C - f)] = chain_table(paths, u, free, C - f, net.setup)
        for w in sorted_nodes(t.best):
            out.append((t.cost(w) + paths.dist(w, v), (u, f), t.stops(w)))
    return out


def handle_join(state: DeploymentState, v, paths=None) -> DeploymentState:
    """Attach ``v`` through the cheapest walk from a forest clone.

    From a clone at layer ``f`` the walk installs VNFs ``f+1 .. C`` on unused
    VMs and then follows a shortest path to ``v``.
    """
    inst = state.instance
    before = state.cost()
    if v in inst.destinations:
        state._record("join", [v], before, [f"{v} is already a destination"])
        return state
    if v not in inst.network:
        raise StructureError(f"unknown node {v}")
    paths = paths or ShortestPaths(inst.network)
    opts = [o for o in join_options(state, v, paths) if o[0] < float("inf")]
    if not opts:
        raise InfeasibleError(f"{v} cannot be attached to the forest")
    cost, (u, f), stops = min(opts, key=lambda o: (o[0], node_key(o[1]), node_key(o[2])))
    C = inst.chain_len
    new = set(state.arcs)
    end = u
    if len(stops) > 1:
        w = chain_walk(stops, paths.path)
        w = ServiceWalk(w.nodes, tuple(None if m is None else m + f for m in w.vnfs))
        new |= set(w.arcs(f))
        end = stops[-1]
    new |= _layer_arcs(paths.path(end, v), C)
    new_inst = _with(inst, destinations=inst.destinations | {v})
    state._install(new_inst, normalize(new_inst, new))
    state._record("join", [v], before, [f"attached at {u} (layer {f})"], increase=cost, attach=(u, f))
    return state


# ---------------------------------------------------------------------------
# VNFs


def handle_vnf_delete(state: DeploymentState, j: int, paths=None) -> DeploymentState:
    """Drop ``f_j``; upstream and downstream VNFs are rejoined by cheaper paths when possible."""
    inst = state.instance
    C = inst.chain_len
    if not 1 <= j <= C:
        raise ValueError(f"VNF index {j} outside 1..{C}")
    before = state.cost()
    hosts = sorted_nodes(v for v, ix in state.forest.vnf_assignments().items() if j in ix)

    def m(L):
        return L if L < j else L - 1

    new = set()
    for (a, la), (b, lb) in state.arcs:
        if a == b and lb == j:
            continue
        new.add(((a, m(la)), (b, m(lb))))
    new_inst = _with(inst, chain_len=C - 1)
    arcs = normalize(new_inst, new)
    paths = paths or ShortestPaths(inst.network)
    parents = _parents(arcs)
    clones = {c for a in arcs for c in a}
    heads = sorted({_head_of(parents, (v, j - 1)) for v in hosts if (v, j - 1) in clones}, key=node_key)
    rerouted = 0
    for h in heads:
        arcs, ok = _reroute(new_inst, arcs, h, paths)
        rerouted += ok
    state._install(new_inst, arcs)
    state._record("delete", [j], before, [f"hosts {hosts}"], rerouted=rerouted)
    return state


def insertion_choice(state: DeploymentState, u, w, paths, free) -> tuple:
    """Cheapest ``(cost, v)`` for running a new VNF between ``u`` and ``w``."""
    best = None
    setup = state.instance.network.setup
    for v in sorted_nodes(free):
        c = paths.dist(u, v) + setup(v) + paths.dist(v, w)
        if best is None or c < best[0] - EPS:
            best = (c, v)
    return best


def handle_vnf_insert(state: DeploymentState, j: int, paths=None) -> DeploymentState:
    """Insert a new ``f_j``; old ``f_j .. f_C`` become ``f_{j+1} .. f_{C+1}``.

    Every (upstream, downstream) pair on layer ``j-1`` gets the VM minimizing
    path + setup + path.  When a VM is already chosen by an earlier pair the
    later pair only adds the downstream path.
    """
    inst = state.instance
    net = inst.network
    C = inst.chain_len
    if not 1 <= j <= C + 1:
        raise ValueError(f"VNF index {j} outside 1..{C + 1}")
    before = state.cost()
    paths = paths or ShortestPaths(net)
    arcs = state.arcs
    succ, parents = _succ(arcs), _parents(arcs)
    clones = {c for a in arcs for c in a}
    heads = sorted({_head_of(parents, c) for c in clones if c[1] == j - 1}, key=node_key)
    pairs = []
    for h in heads:
        _, seg = _segment(succ, h)
        pairs.extend((h, t) for t in _tails(succ, seg, inst))

    def sh(L):
        return L if L < j else L + 1

    new = set()
    for (a, la), (b, lb) in arcs:
        if la == lb == j - 1 and a != b:
            continue
        if a == b and la == j - 1:
            new.add(((a, j), (a, j + 1)))
        else:
            new.add(((a, sh(la)), (b, sh(lb))))
    used = set(state.forest.vnf_assignments())
    free = [v for v in net.vms if v not in used]
    chosen: dict = {}
    notes = []
    for h, t in pairs:
        pick = insertion_choice(state, h[0], t[0], paths, free)
        if pick is None or pick[0] == float("inf"):
            raise InfeasibleError(f"no free VM between {h[0]} and {t[0]}")
        _, v = pick
        if v in chosen:
            notes.append(f"{v} shared by {chosen[v]} and {h[0]}")
        else:
            chosen[v] = h[0]
            new |= _layer_arcs(paths.path(h[0], v), j - 1)
            new.add(((v, j - 1), (v, j)))
        new |= _layer_arcs(paths.path(v, t[0]), j)
    new_inst = _with(inst, chain_len=C + 1)
    state._install(new_inst, normalize(new_inst, new))
    state._record("insert", [j], before, notes, hosts=sorted_nodes(chosen))
    return state


# ---------------------------------------------------------------------------
# congestion


def handle_congestion(state: DeploymentState, element: tuple, load: float) -> DeploymentState:
    """``element`` is ``("edge", u, v)`` or ``("vm", v)``; ``load`` replaces its background load.

    Costs are refreshed, then the affected segment is rerouted (link) or the
    VNF moves to a cheaper VM (VM).  The replacement is built before the old
    part is released; the log records that order.
    """
    kind = element[0]
    if kind == "edge":
        e = _edge(element[1], element[2])
        if not state.instance.network.has_edge(*e):
            raise ValueError(f"unknown link {e}")
        state.base_edge_load[e] = float(load)
    elif kind == "vm":
        v = element[1]
        if not state.instance.network.is_vm(v):
            raise ValueError(f"{v} is not a VM")
        state.base_vm_load[v] = float(load)
    else:
        raise ValueError(f"unknown congestion target {kind!r}")
    refresh_costs(state)
    inst = state.instance
    before = state.cost()
    arcs = state.arcs
    paths = ShortestPaths(inst.network)
    parents = _parents(arcs)
    order = []
    if kind == "edge":
        hit = sorted({_head_of(parents, a) for a, b in arcs if a[0] != b[0] and _edge(a[0], b[0]) == e}, key=node_key)
        if not hit:
            state._record("congest", list(element[1:]) + [load], before, ["not on the forest"])
            return state
        for h in hit:
            arcs, ok = _reroute(inst, arcs, h, paths)
            if ok:
                order += [f"make: new path below {h}", f"break: old path below {h}"]
    else:
        ix = state.forest.vnf_assignments().get(v)
        if not ix:
            state._record("congest", [v, load], before, ["not on the forest"])
            return state
        j = min(ix)
        arcs, moved = _migrate(state, arcs, v, j, paths)
        if moved is not None:
            order += [f"make: f_{j} on {moved}", f"break: f_{j} on {v}"]
    state._install(inst, arcs)
    state._record("congest", list(element[1:]) + [load], before, order, order=[o.split(":")[0] for o in order])
    return state


def _migrate(state, arcs, v, j, paths) -> tuple:
    inst = state.instance
    net = inst.network
    succ, parents = _succ(arcs), _parents(arcs)
    head = _head_of(parents, (v, j - 1))
    down, seg = _segment(succ, (v, j))
    tails = _tails(succ, seg, inst)
    used = set(state.forest.vnf_assignments())
    best = None
    for x in sorted_nodes([m for m in net.vms if m not in used] + [v]):
        up = paths.dist(head[0], x)
        if up == float("inf"):
            continue
        try:
            t = steiner_approx(paths, x, [c[0] for c in tails])
        except InfeasibleError:
            continue
        c = up + net.setup(x) + t.cost
        if best is None or c < best[0] - EPS:
            best = (c, x, t)
    if best is None or best[1] == v:
        return arcs, None
    _, x, tree = best
    new = (set(arcs) - down) - {((v, j - 1), (v, j))}
    new |= _layer_arcs(paths.path(head[0], x), j - 1)
    new.add(((x, j - 1), (x, j)))
    new |= {((a, j), (b, j)) for a, b in tree.edges}
    new = normalize(inst, new)
    if _cost(inst, new) < _cost(inst, arcs) - EPS:
        return new, x
    return arcs, None


# ---------------------------------------------------------------------------
# online requests


def handle_request(
    state: DeploymentState,
    demand: float,
    n_dests: int,
    n_sources: int,
    rng: random.Random,
    solver: Optional[Callable] = None,
    pool=None,
) -> DeploymentState:
    """Commit the current forest's load and deploy a fresh random request.

    Sources and destinations are drawn from ``pool`` (default: every
    non-VM node).  Costs are refreshed at current load plus ``demand``.
    """
    if solver is None:
        from .sofda import sofda as solver
    state.base_edge_load = state.edge_loads()
    state.base_vm_load = state.vm_loads()
    state.committed.append((state.instance, state.forest, state.demand))
    inst = state.instance
    net = inst.network
    nodes = sorted_nodes(pool if pool is not None else [n for n in net.nodes if not net.is_vm(n)])
    if n_sources + n_dests > len(nodes):
        raise ValueError(f"request needs {n_sources + n_dests} nodes, only {len(nodes)} available")
    sources = rng.sample(nodes, n_sources)
    rest = [n for n in nodes if n not in sources]
    dests = rng.sample(rest, n_dests)
    state.forest = ServiceForest(inst.chain_len)
    state.demand = float(demand)
    state.instance = _with(inst, sources=sources, destinations=dests)
    refresh_costs(state, increment=state.demand)
    forest = solver(state.instance)
    state._install(state.instance, normalize(state.instance, forest.all_arcs()))
    state._record("request", [demand, n_dests, n_sources], 0.0, [f"sources {sources}", f"destinations {dests}"])
    return state


# ---------------------------------------------------------------------------
# scripts


@dataclass(frozen=True)
class Event:
    kind: str
    args: tuple
    line: int = 0


_ARITY = {"join": 1, "leave": 1, "insert": 1, "delete": 1, "request": 3}


def parse_events(text: str) -> list:
    """Parse an event script; blank lines and ``#`` comments are skipped."""
    out = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0].lower()
        try:
            if kind in ("join", "leave"):
                args = (parse_node(tok[1]),)
            elif kind in ("insert", "delete"):
                args = (int(tok[1]),)
            elif kind == "request":
                args = (float(tok[1]), int(tok[2]), int(tok[3]))
            elif kind == "congest" and len(tok) > 1 and tok[1] == "edge":
                args = ("edge", parse_node(tok[2]), parse_node(tok[3]), float(tok[4]))
                if len(tok) != 5:
                    raise ValueError
            elif kind == "congest" and len(tok) > 1 and tok[1] == "vm":
                args = ("vm", parse_node(tok[2]), float(tok[3]))
                if len(tok) != 4:
                    raise ValueError
            else:
                raise ValueError(f"line {no}: unknown event {line!r}")
            if kind in _ARITY and len(tok) != _ARITY[kind] + 1:
                raise ValueError
        except (IndexError, ValueError) as exc:
            if str(exc).startswith("line"):
                raise
            raise ValueError(f"line {no}: malformed event {line!r}") from None
        out.append(Event(kind, args, no))
    return out


def apply_event(state: DeploymentState, ev: Event, rng: Optional[random.Random] = None, solver=None) -> DeploymentState:
    if ev.kind == "join":
        return handle_join(state, ev.args[0])
    if ev.kind == "leave":
        return handle_leave(state, ev.args[0])
    if ev.kind == "insert":
        return handle_vnf_insert(state, ev.args[0])
    if ev.kind == "delete":
        return handle_vnf_delete(state, ev.args[0])
    if ev.kind == "congest":
        return handle_congestion(state, ev.args[:-1], ev.args[-1])
    if ev.kind == "request":
        return handle_request(state, *ev.args, rng or random.Random(0), solver)
    raise ValueError(f"unknown event {ev.kind!r}")


def run_events(state: DeploymentState, events, rng=None, solver=None) -> DeploymentState:
    for ev in events:
        apply_event(state, ev, rng, solver)
    return state
