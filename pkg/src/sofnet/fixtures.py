"""Small hand-built instances with known answers.

Only aggregate numbers are known for these examples (totals, metric-edge
costs, chain costs).  Individual edge and setup costs were chosen so that
every listed identity holds; each builder documents the identities it pins.
"""

from __future__ import annotations

from .core import SWITCH, VM, Network, ServiceForest, ServiceWalk, SofInstance


def _network(setups: dict, edges: dict, nodes=None) -> Network:
    net = Network()
    names = set(nodes or ()) | {x for e in edges for x in e}
    for v in sorted(names):
        net.add_node(v, VM if v in setups else SWITCH, setups.get(v, 0))
    for (a, b), c in edges.items():
        net.add_edge(a, b, c)
    return net


def _forest(chain_len: int, walks, tails) -> ServiceForest:
    f = ServiceForest(chain_len)
    for nodes, marks in walks:
        f.add_walk(ServiceWalk.from_markers(nodes, marks))
    for p in tails:
        f.add_path(p, chain_len)
    return f


# ---------------------------------------------------------------------------
# fig1


FIG1_SETUP = {2: 1, 3: 1, 11: 1, 6: 3, 7: 3}
FIG1_EDGES = {
    (1, 3): 1, (3, 2): 3, (3, 11): 1, (11, 10): 1,
    (2, 15): 20, (15, 16): 1, (16, 17): 1, (17, 9): 1,
    (0, 6): 1, (6, 7): 1, (7, 9): 1,
}


def fig1() -> SofInstance:
    """Two sources, two destinations, chain of two.

    Pins: the single tree through VMs 3 and 2 costs 1 + 3 + 28 = 32 on links
    plus 2 on setups (34); the optimum is two trees on four VMs costing 14.
    """
    return SofInstance(_network(FIG1_SETUP, FIG1_EDGES), {0, 1}, {9, 10}, 2)


def fig1_forests() -> dict:
    return {
        "single_tree": _forest(2, [((1, 3, 2), {1: 1, 2: 2})], [(2, 15, 16, 17, 9), (2, 3, 11, 10)]),
        "two_trees": _forest(
            2,
            [((1, 3, 11), {1: 1, 2: 2}), ((0, 6, 7), {1: 1, 2: 2})],
            [(11, 10), (7, 9)],
        ),
    }


# ---------------------------------------------------------------------------
# fig2


FIG2_SETUP = {2: 18, 3: 18, 4: 2, 5: 11, 6: 20, 7: 10}
FIG2_EDGES = {
    (1, 2): 6, (2, 4): 2, (4, 10): 2, (10, 6): 3, (6, 8): 4,
    (0, 3): 3, (3, 11): 3, (11, 5): 3, (5, 7): 3, (7, 9): 3,
    (4, 7): 9, (2, 8): 5, (1, 3): 3, (3, 4): 5, (1, 4): 10,
}


def fig2() -> SofInstance:
    """Nodes 0..11; 10 and 11 are switches.

    Pins three forests: two trees (setup 50, links 32, total 82), one tree
    branching at VM 4 (30 + 29 = 59) and the optimum 1 -> 3 -> 4 -> {8, 9}
    (20 + 27 = 47).
    """
    return SofInstance(_network(FIG2_SETUP, FIG2_EDGES), {0, 1}, {8, 9}, 2)


def fig2_forests() -> dict:
    return {
        "two_trees": _forest(
            2,
            [((1, 2, 4, 10, 6), {2: 1, 4: 2}), ((0, 3, 11, 5, 7), {1: 1, 4: 2})],
            [(6, 8), (7, 9)],
        ),
        "split_at_4": _forest(
            2,
            [((1, 4, 7), {1: 1, 2: 2}), ((1, 4, 2), {1: 1, 2: 2})],
            [(7, 9), (2, 8)],
        ),
        "optimal": _forest(2, [((1, 3, 4), {1: 1, 2: 2})], [(4, 2, 8), (4, 7, 9)]),
    }


# ---------------------------------------------------------------------------
# fig3 / fig4 / fig5


FIG3_SETUP = {2: 0, 3: 1.5, 4: 0, 5: 0, 6: 1, 7: 4.5}
FIG3_EDGES = {
    (1, 2): 1, (2, 4): 1, (4, 6): 11.5, (2, 3): 1.5, (3, 5): 2.5, (5, 6): 11.5,
    (4, 7): 5.5, (5, 7): 7.5, (6, 8): 1, (7, 9): 6.5, (0, 3): 1,
}


def fig3() -> SofInstance:
    """Single source 1, destinations {8, 9}, chain of five.

    Pins, with VM 5 as last VM: metric cost c(1,6) = 1+1+11.5+(0+1)/2 = 14 on
    path 1-2-4-6 and c(2,6) = 1+11.5+(0+1)/2 = 13.  The single-source
    algorithm picks last VM 7 with chain (1,2,4,2,3,5,7) (20.5) and tree
    7-4-6-8, 7-9 (24.5): total 45.
    """
    return SofInstance(_network(FIG3_SETUP, FIG3_EDGES), {1}, {8, 9}, 5)


def fig4() -> SofInstance:
    """``fig3`` with node 0 as second source.

    Pins: the virtual edge (1, 6) costs 21 via walk (1,2,4,2,3,5,6); the
    virtual edge (0, 7) uses walk (0,3,5,3,2,4,7) with VNFs at 3,5,2,4,7.
    """
    return SofInstance(_network(FIG3_SETUP, FIG3_EDGES), {0, 1}, {8, 9}, 5)


def fig5_walks() -> tuple:
    """Two conflicting chain walks on ``fig4``.

    The second walk runs f1 at VM 3 where the first runs f3, and f4 at VM 4
    where the first runs f1.  Resolution attaches it to the first walk at
    VM 5 and shortens (5,3,2,4,7) to the edge (5,7).
    """
    w1 = ServiceWalk.from_markers((1, 2, 4, 2, 3, 5, 6), {2: 1, 3: 2, 4: 3, 5: 4, 6: 5})
    w2 = ServiceWalk.from_markers((0, 3, 5, 3, 2, 4, 7), {1: 1, 2: 2, 4: 3, 5: 4, 6: 5})
    return w1, w2


FIXTURES = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig4}


def load_fixture(name: str) -> SofInstance:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(sorted(FIXTURES))}") from None


def fixture_forests(name: str) -> dict:
    """Named reference forests for a fixture (may be empty)."""
    return {"fig1": fig1_forests, "fig2": fig2_forests}.get(name, dict)()
