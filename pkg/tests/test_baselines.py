import random

import pytest

from oracles import random_instance, sof_brute
from sofnet.baselines import ENEMP, EST, BaselineConfig, run_baseline, run_enemp, run_est, run_st
from sofnet.core import SofInstance, forest_cost, validate_forest
from sofnet.fixtures import load_fixture
from sofnet.topology import PRESETS, generate_topology, sample_instance

RUNNERS = (run_st, run_est, run_enemp)


def total(inst, forest):
    return forest_cost(inst, forest).total


def test_config_rejects_unknown_algorithm():
    with pytest.raises(ValueError):
        BaselineConfig("nope")


@pytest.mark.parametrize("runner", RUNNERS)
def test_baselines_valid_and_never_below_optimum(runner):
    for seed in range(40):
        inst = random_instance(seed, n=8, m=4, chain=2, n_sources=2, n_dests=2)
        f = runner(inst)
        assert validate_forest(inst, f).ok, seed
        assert total(inst, f) >= sof_brute(inst) - 1e-9


@pytest.mark.parametrize("algorithm", [EST, ENEMP])
def test_multi_source_iterations_strictly_decrease(algorithm):
    for seed in range(30):
        inst = random_instance(seed, n=12, m=6, chain=2, n_sources=4, n_dests=4, extra=6)
        f = run_baseline(inst, BaselineConfig(algorithm, True))
        hist = f.meta["iterations"]
        assert all(b < a for a, b in zip(hist, hist[1:]))
        assert hist[-1] == pytest.approx(total(inst, f))
        single = run_baseline(inst, BaselineConfig(algorithm, False))
        assert total(inst, f) <= total(inst, single) + 1e-9


def test_st_uses_one_tree():
    for seed in range(20):
        inst = random_instance(seed, n=10, m=5, chain=2, n_sources=3, n_dests=3)
        f = run_st(inst)
        assert len(f.meta["sources"]) == 1
        assert len(set(f.served.values())) == 1


def test_est_on_fixture():
    inst = load_fixture("fig1")
    f = run_est(inst, multi_source=False)
    assert validate_forest(inst, f).ok
    assert total(inst, f) == 32


def test_enemp_on_generated_topology_uses_tree_vms():
    net = generate_topology(PRESETS["softlayer"], 1)
    inst = sample_instance(net, 6, 4, 3, random.Random(1))
    f = run_enemp(inst)
    assert validate_forest(inst, f).ok
    assert not f.meta["fallback"]


def test_empty_destinations():
    inst = random_instance(0)
    empty = SofInstance(inst.network, inst.sources, [], 2)
    assert run_est(empty).meta["iterations"] == [0.0]
