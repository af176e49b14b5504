import json
import random

import networkx as nx
import pytest

from sofnet.topology import (
    PRESETS,
    GeneratorParams,
    TopologyError,
    access_nodes,
    dump_text,
    generate_topology,
    load_topology,
    parse_json,
    parse_text,
    sample_instance,
    scale_setup,
)

TEXT = """# tiny
node 0 switch 0
node 1 vm 2.5 10 1
node 2 switch 0
edge 0 1 1.5
edge 1 2 2 100 30
source 0
dest 2
chain 1
"""


def test_parse_text():
    topo = parse_text(TEXT)
    net = topo.network
    assert net.vms == [1]
    assert net.setup(1) == 2.5
    assert net.cost(1, 2) == 2
    assert net.graph.edges[1, 2]["load"] == 30
    assert (topo.sources, topo.dests, topo.chain) == ([0], [2], 1)
    assert topo.instance().chain_len == 1


@pytest.mark.parametrize(
    "bad",
    [
        "node 0 router 0",
        "node 0 switch",
        "node 0 switch 0\nnode 0 switch 0",
        "node 0 switch 0\nedge 0 5 1",
        "node 0 switch 0\nsource 3",
        "chain x",
        "link 0 1 2",
        "node 0 vm abc",
    ],
)
def test_parse_text_errors(bad):
    with pytest.raises(TopologyError, match="line"):
        parse_text(bad)


def test_text_round_trip():
    topo = parse_text(TEXT)
    again = parse_text(dump_text(topo))
    assert dump_text(again) == dump_text(topo)


def test_parse_json_and_errors():
    data = {
        "nodes": [{"id": 0}, {"id": 1, "role": "vm", "setup": 1}, {"id": 2}],
        "edges": [{"u": 0, "v": 1, "cost": 1}, {"u": 1, "v": 2, "cost": 3}],
        "sources": [0],
        "dests": [2],
        "chain": 1,
    }
    topo = parse_json(json.dumps(data))
    assert topo.network.num_edges() == 2
    for broken in (
        {**data, "extra": 1},
        {**data, "edges": [{"u": 0, "v": 9, "cost": 1}]},
        {**data, "edges": [{"u": 0, "v": 1}]},
        {**data, "dests": [7]},
        [1, 2],
    ):
        with pytest.raises(TopologyError):
            parse_json(broken)


def test_load_topology_by_suffix(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text(TEXT)
    assert load_topology(p).chain == 1
    q = tmp_path / "t.json"
    q.write_text(json.dumps({"nodes": [{"id": "a"}], "edges": []}))
    assert load_topology(q).network.nodes == ["a"]


def test_generator_is_seeded():
    p = GeneratorParams(5, 6, 2, vms=3)
    assert dump_text_of(p, 3) == dump_text_of(p, 3)
    assert dump_text_of(p, 3) != dump_text_of(p, 4)


def dump_text_of(params, seed):
    from sofnet.topology import Topology

    return dump_text(Topology(generate_topology(params, seed)))


def test_generator_counts_and_connectivity():
    p = GeneratorParams(60, 100, 10, vms=12)
    for seed in range(100):
        net = generate_topology(p, seed)
        assert nx.is_connected(net.graph)
        access = access_nodes(net)
        backbone = net.graph.subgraph(access)
        assert abs(backbone.number_of_edges() - 100) <= 1
        assert len(net.vms) == 12
        hosts = net.graph.graph["vm_host"]
        assert set(hosts.values()) <= set(net.graph.graph["data_centers"])


def test_preset_sizes():
    net = generate_topology(PRESETS["cogent"], 0)
    access = access_nodes(net)
    assert len(access) == 190
    assert net.graph.subgraph(access).number_of_edges() == 260
    assert len(net.graph.graph["data_centers"]) == 40


def test_generator_costs_come_from_loads():
    from sofnet.core import element_cost

    net = generate_topology(GeneratorParams(20, 30, 4, vms=5), 1)
    for a, b, d in net.graph.edges(data=True):
        assert d["cost"] == pytest.approx(element_cost(d["load"], d["capacity"]))
    zero = generate_topology(GeneratorParams(20, 30, 4, vms_per_dc=2, random_load=False), 1)
    assert len(zero.vms) == 8
    assert all(d["load"] == 0 for _, _, d in zero.graph.edges(data=True))


def test_params_validation():
    for args in ((1, 0, 1), (5, 3, 1), (5, 20, 1), (5, 6, 0), (5, 6, 6)):
        with pytest.raises(ValueError):
            GeneratorParams(*args)


def test_sample_instance_and_scaling():
    net = generate_topology(PRESETS["softlayer"], 2)
    inst = sample_instance(net, 5, 4, 3, random.Random(0))
    assert not inst.sources & inst.destinations
    assert (inst.sources | inst.destinations) <= set(access_nodes(net))
    with pytest.raises(ValueError):
        sample_instance(net, 20, 10, 3, random.Random(0))
    scaled = scale_setup(net, 3)
    for v in net.vms:
        assert scaled.setup(v) == pytest.approx(3 * net.setup(v))
