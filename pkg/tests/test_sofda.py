import pytest

from oracles import conflict_merge, conflicting_vms, random_instance, sof_brute
from sofnet.core import InfeasibleError, Network, ServiceForest, ShortestPaths, SofInstance, VM, forest_cost, validate_forest
from sofnet.fixtures import fig5_walks, load_fixture
from sofnet.sofda import build_aux_graph, resolve_conflicts, sofda, sofda_ss


def total(inst, forest):
    return forest_cost(inst, forest).total


def test_single_source_fixture():
    inst = load_fixture("fig3")
    forest = sofda_ss(inst)
    assert total(inst, forest) == 45
    assert forest.meta["last_vm"] == 7
    assert forest.walks[0].nodes == (1, 2, 4, 2, 3, 5, 7)
    assert validate_forest(inst, forest).ok


def test_virtual_edges_on_fixture():
    aux = build_aux_graph(load_fixture("fig4"))
    assert aux.virtual[(1, 6)].cost == 21
    walk = aux.virtual[(0, 7)].walk
    assert walk.nodes == (0, 3, 5, 3, 2, 4, 7)
    assert [n for _, n, _ in walk.marked()] == [3, 5, 2, 4, 7]


def test_fixture_two_sources():
    for name, bound in (("fig1", 14), ("fig2", 48)):
        inst = load_fixture(name)
        forest = sofda(inst)
        assert validate_forest(inst, forest).ok
        assert total(inst, forest) == bound


def test_conflict_fixture_attaches_incoming_walk():
    inst = load_fixture("fig4")
    w1, w2 = fig5_walks()
    forest = ServiceForest(5, [w1])
    out, rep = resolve_conflicts(forest, w2, 5, inst, ShortestPaths(inst.network))
    (rec,) = rep.records
    assert (rec.case, rec.w, rec.h, rec.i, rec.j) == ("attach_incoming_via_w", 5, 4, 1, 4)
    assert rep.shortened == 1
    assert out.walks[1].nodes == (1, 2, 4, 2, 3, 5, 7)
    assert (rep.cost_before, rep.cost_after) == (41, 33)
    assert not conflicting_vms(out)


def test_resolution_without_paths_keeps_spliced_walk():
    inst = load_fixture("fig4")
    w1, w2 = fig5_walks()
    out, rep = resolve_conflicts(ServiceForest(5, [w1]), w2, 5, inst)
    assert rep.shortened == 0
    assert not conflicting_vms(out)


def test_random_merges_are_safe():
    merges = 0
    for seed in range(150):
        inst, before, after, rep = conflict_merge(seed)
        if not rep.records:
            continue
        merges += 1
        assert not conflicting_vms(after)
        assert total(inst, after) <= total(inst, before) + 1e-9
        assert set(after.enabled_vms) <= set(before.enabled_vms)
        assert validate_forest(inst, after).ok
    assert merges > 50


def test_sofda_valid_and_bounded_on_random_instances():
    for seed in range(40):
        inst = random_instance(seed, n=8, m=4, chain=2, n_sources=2, n_dests=2)
        opt = sof_brute(inst)
        f = sofda(inst)
        assert validate_forest(inst, f).ok
        assert opt - 1e-9 <= total(inst, f) <= 6 * opt + 1e-9
        ss = min(total(inst, sofda_ss(inst, source=s)) for s in inst.sources)
        assert opt - 1e-9 <= ss


def test_sofda_is_deterministic():
    inst = random_instance(5, n=12, m=6, chain=3, n_sources=3, n_dests=4)
    a, b = sofda(inst), sofda(inst)
    assert a.all_arcs() == b.all_arcs()


def test_no_destinations_gives_empty_forest():
    inst = random_instance(2)
    empty = SofInstance(inst.network, inst.sources, [], 2)
    assert total(empty, sofda(empty)) == 0


def test_infeasible_instances():
    net = Network()
    net.add_node(0).add_node(1, VM, 1).add_node(2).add_node(3)
    net.add_edge(0, 1, 1).add_edge(1, 2, 1)
    with pytest.raises(InfeasibleError):
        sofda(SofInstance(net, [0], [2], 2))
    with pytest.raises(InfeasibleError):
        sofda(SofInstance(net, [0], [3], 1))
    with pytest.raises(ValueError):
        sofda_ss(random_instance(1, n_sources=2))
