import itertools

import pytest

from oracles import kstroll_brute, random_instance
from sofnet.core import InfeasibleError, ShortestPaths
from sofnet.fixtures import load_fixture
from sofnet.kstroll import (
    PLAIN,
    SOURCE_COST,
    build_metric_instance,
    chain_table,
    chain_walk,
    lift_walk,
    solve_kstroll,
)


def metric_instances(count=40):
    for seed in range(count):
        inst = random_instance(seed, n=9, m=5, chain=3, n_sources=1, n_dests=2)
        (s,) = inst.sources
        for u in inst.network.vms:
            if u != s:
                yield inst, build_metric_instance(inst, u, source=s)


def test_fixture_metric_costs():
    mi = build_metric_instance(load_fixture("fig3"), 5)
    assert mi.cost(1, 6) == 14
    assert mi.cost(2, 6) == 13


def test_metric_is_symmetric_and_triangular():
    for _, mi in metric_instances(30):
        assert not mi.triangle_violations(1e-9)
        for a, b in itertools.combinations(mi.nodes, 2):
            assert mi.cost(a, b) == mi.cost(b, a)


def test_source_cost_variant_adds_source_setup():
    inst = random_instance(1, n=8, m=4, chain=2, n_sources=1)
    (s,) = inst.sources
    inst.source_setup_costs = {s: 6.0}
    u = inst.network.vms[-1] if inst.network.vms[-1] != s else inst.network.vms[0]
    plain = build_metric_instance(inst, u, PLAIN)
    shifted = build_metric_instance(inst, u, SOURCE_COST)
    assert not shifted.triangle_violations()
    other = [x for x in plain.nodes if x not in (s,)][0]
    assert shifted.cost(s, other) >= plain.cost(s, other) - 1e-9


def test_exact_stroll_matches_enumeration():
    checked = 0
    for _, mi in metric_instances(25):
        for k in range(2, min(5, len(mi.nodes)) + 1):
            got = solve_kstroll(mi, k, mode="exact")
            assert got.cost == pytest.approx(kstroll_brute(mi, k))
            assert len(set(got.nodes)) == k
            assert got.endpoints == (mi.source, mi.last_vm)
            checked += 1
    assert checked > 100


def test_heuristic_stroll_is_feasible_and_not_better_than_exact():
    for _, mi in metric_instances(15):
        k = min(4, len(mi.nodes))
        h = solve_kstroll(mi, k, mode="heuristic")
        e = solve_kstroll(mi, k, mode="exact")
        assert len(set(h.nodes)) == k
        assert h.cost >= e.cost - 1e-9
        assert h.cost == pytest.approx(sum(mi.cost(a, b) for a, b in zip(h.nodes, h.nodes[1:])))


def test_stroll_rejects_bad_k():
    _, mi = next(metric_instances(1))
    with pytest.raises(ValueError):
        solve_kstroll(mi, 1)
    with pytest.raises(InfeasibleError):
        solve_kstroll(mi, len(mi.nodes) + 1)


def test_lifted_walk_carries_the_chain():
    for inst, mi in metric_instances(10):
        sw = solve_kstroll(mi, inst.chain_len + 1)
        walk = lift_walk(mi, sw)
        assert [m for _, _, m in walk.marked()] == list(range(1, inst.chain_len + 1))
        assert walk.terminal == mi.last_vm
        assert walk.cost(inst.network) == pytest.approx(sw.cost)


def test_chain_table_agrees_with_per_vm_strolls():
    for seed in range(20):
        inst = random_instance(seed, n=9, m=5, chain=3, n_sources=1)
        (s,) = inst.sources
        paths = ShortestPaths(inst.network)
        table = chain_table(paths, s, inst.network.vms, 3, inst.network.setup)
        for u, (cost, stops) in table.best.items():
            mi = build_metric_instance(inst, u, source=s, paths=paths)
            assert cost == pytest.approx(kstroll_brute(mi, 4))
            walk = chain_walk(stops, paths.path)
            assert walk.cost(inst.network) == pytest.approx(cost)


def test_chain_table_modes_agree_on_tiny_instances():
    for seed in range(20):
        inst = random_instance(seed, n=8, m=4, chain=2, n_sources=1)
        (s,) = inst.sources
        paths = ShortestPaths(inst.network)
        ex = chain_table(paths, s, inst.network.vms, 2, inst.network.setup, mode="exact")
        he = chain_table(paths, s, inst.network.vms, 2, inst.network.setup, mode="heuristic")
        assert set(ex.best) == set(he.best)
        for u in ex.best:
            assert he.cost(u) >= ex.cost(u) - 1e-9
