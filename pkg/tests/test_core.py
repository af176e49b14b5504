import json
import math
import random

import pytest

from oracles import random_instance, slope_integral_cost
from sofnet.core import (
    SWITCH,
    VM,
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
    forest_from_dict,
    forest_to_dict,
    parse_node,
    shortest_path,
    sorted_nodes,
    validate_forest,
)
from sofnet.fixtures import fixture_forests, load_fixture
from sofnet.sofda import sofda

BREAKPOINTS = (1 / 3, 2 / 3, 9 / 10, 1.0, 11 / 10)


def small_net():
    net = Network()
    net.add_node("a").add_node("b").add_node("m", VM, 2.0).add_node("d")
    net.add_edge("a", "m", 1).add_edge("m", "b", 1).add_edge("a", "b", 5).add_edge("b", "d", 1)
    return net


# -- cost model


def test_cost_model_printed_values():
    assert element_cost(1 / 3, 1) == pytest.approx(1 / 3, abs=1e-12)
    assert element_cost(1.0, 1) == pytest.approx(32 / 3, abs=1e-12)


def piece_values(params, i, u):
    """Pieces ``i`` and ``i+1`` evaluated at utilization ``u`` with unit capacity."""
    return tuple(params.slopes[j] * u - params.intercepts[j] for j in (i, i + 1))


@pytest.mark.parametrize("i", range(len(BREAKPOINTS)))
def test_cost_model_continuous_at_breakpoints(i):
    left, right = piece_values(CostModelParams(), i, BREAKPOINTS[i])
    assert abs(left - right) < 1e-9
    assert element_cost(BREAKPOINTS[i], 1) == pytest.approx(left, abs=1e-12)


def test_cost_model_matches_slope_integral():
    rng = random.Random(7)
    for _ in range(500):
        cap = rng.uniform(1, 200)
        load = rng.uniform(0, 1.5 * cap)
        assert element_cost(load, cap) == pytest.approx(slope_integral_cost(load, cap), rel=1e-9, abs=1e-9)


def test_cost_model_convex():
    rng = random.Random(3)
    for _ in range(1000):
        a, b = sorted(rng.uniform(0, 150) for _ in range(2))
        lam = rng.random()
        mid = lam * a + (1 - lam) * b
        assert element_cost(mid, 100) <= lam * element_cost(a, 100) + (1 - lam) * element_cost(b, 100) + 1e-9


def test_printed_intercept_is_discontinuous():
    left, right = piece_values(CostModelParams.as_printed(), 4, 11 / 10)
    assert right - left == pytest.approx(2000 / 3)


def test_cost_model_rejects_bad_input():
    with pytest.raises(ValueError):
        element_cost(1, 0)
    with pytest.raises(ValueError):
        element_cost(-1, 1)
    with pytest.raises(ValueError):
        CostModelParams(thresholds=(0.5, 0.4, 0.9, 1.0, 1.1))


# -- network and paths


def test_network_validation():
    net = Network()
    net.add_node(1).add_node(2, VM, 3)
    with pytest.raises(ValueError):
        net.add_node(3, SWITCH, 1.0)
    with pytest.raises(ValueError):
        net.add_node(4, VM, -1)
    with pytest.raises(ValueError):
        net.add_edge(1, 1, 1)
    with pytest.raises(ValueError):
        net.add_edge(1, 2, -2)
    with pytest.raises(StructureError):
        net.add_edge(1, 9, 1)


def test_parse_node():
    assert parse_node("12") == 12
    assert parse_node("x1") == "x1"
    assert sorted_nodes(["b", 3, 1, "a"]) == [1, 3, "a", "b"]


def test_shortest_path_prefers_cheaper_detour():
    res = shortest_path(small_net(), "a", "d")
    assert res.cost == 3
    assert res.path == ["a", "m", "b", "d"]


def test_shortest_path_half_setup_metric_charges_pass_through_vm():
    res = shortest_path(small_net(), "a", "b", metric="connection_plus_half_setups")
    assert res.cost == 4
    assert res.path == ["a", "m", "b"]


def test_shortest_paths_tie_break_is_lexicographic():
    net = Network()
    for n in range(4):
        net.add_node(n)
    net.add_edge(0, 2, 1).add_edge(2, 3, 1).add_edge(0, 1, 1).add_edge(1, 3, 1)
    assert ShortestPaths(net).path(0, 3) == [0, 1, 3]


def test_unreachable_path():
    net = small_net()
    net.add_node("z")
    sp = ShortestPaths(net)
    assert sp.path("a", "z") is None
    assert sp.dist("a", "z") == math.inf


# -- instances, walks, forests


def test_instance_checks():
    net = small_net()
    with pytest.raises(StructureError):
        SofInstance(net, ["nope"], ["d"], 1)
    with pytest.raises(ValueError):
        SofInstance(net, ["a"], ["d"], -1)
    with pytest.raises(InfeasibleError):
        SofInstance(net, ["a"], ["d"], 2).check_feasible()
    SofInstance(net, ["a"], ["d"], 1).check_feasible()


def test_walk_arcs_and_cost():
    net = small_net()
    w = ServiceWalk.from_markers(["a", "m", "b"], {1: 1})
    assert w.arcs() == [(("a", 0), ("m", 0)), (("m", 0), ("m", 1)), (("m", 1), ("b", 1))]
    assert w.cost(net) == 4
    assert w.final_layer == 1
    with pytest.raises(ValueError):
        ServiceWalk(["a", "m"], [2, 1])


def test_validate_forest_catches_problems():
    net = small_net()
    inst = SofInstance(net, ["a"], ["d"], 1)
    good = ServiceForest(1, [ServiceWalk.from_markers(["a", "m"], {1: 1})])
    good.add_path(["m", "b", "d"], 1)
    assert validate_forest(inst, good).ok
    assert forest_cost(inst, good).total == 5

    on_switch = ServiceForest(1, arcs={(("a", 0), ("a", 1)), (("a", 1), ("b", 1)), (("b", 1), ("d", 1))})
    assert any("non-VM" in v for v in validate_forest(inst, on_switch).violations)

    missing = ServiceForest(1, [ServiceWalk.from_markers(["a", "m"], {1: 1})])
    assert any("no complete chain" in v for v in validate_forest(inst, missing).violations)

    bad_link = ServiceForest(1, arcs={(("a", 0), ("d", 0))})
    assert validate_forest(inst, bad_link).structural


def test_fixture_forest_costs():
    inst = load_fixture("fig1")
    forests = fixture_forests("fig1")
    assert forest_cost(inst, forests["single_tree"]).total == 34
    assert forest_cost(inst, forests["two_trees"]).total == 14
    assert all(validate_forest(inst, f).ok for f in forests.values())


def test_forest_serialization_round_trip():
    for seed in range(20):
        inst = random_instance(seed, n=9, m=4, chain=2)
        forest = sofda(inst)
        data = json.loads(json.dumps(forest_to_dict(forest)))
        back = forest_from_dict(data)
        assert validate_forest(inst, back).ok
        assert forest_cost(inst, back).total == pytest.approx(forest_cost(inst, forest).total)
