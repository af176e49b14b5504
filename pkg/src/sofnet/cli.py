"""Command-line entry point: ``sofnet <subcommand> ...``.

Exit codes: 0 success, 2 infeasible request, 3 bad input.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from dataclasses import replace
from pathlib import Path

from .core import InfeasibleError, SofInstance, StructureError, forest_cost, forest_to_dict, sorted_nodes, validate_forest
from .distsim import partition, run_distributed_sofda
from .dynamics import DeploymentState, parse_events, run_events
from .exactopt import LimitError, count_rows, expected_counts, export_ip, oracle_optimal, solve_lp_file
from .experiments import AXES, DEFAULTS, ONLINE_RANGES, SOLVERS, Scenario, rows_to_csv, run_scenario, solve
from .fixtures import FIXTURES, load_fixture
from .topology import PRESETS, GeneratorParams, TopologyError, generate_topology, load_topology, sample_instance

EXIT_OK, EXIT_INFEASIBLE, EXIT_BAD_INPUT = 0, 2, 3


def _generate_spec(text: str) -> GeneratorParams:
    try:
        n, e, dc = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected n,e,dc (three integers), got {text!r}") from None
    return GeneratorParams(n, e, dc)


def _csv_list(kind):
    def parse(text):
        try:
            return tuple(kind(x) for x in text.split(",") if x)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def _add_topology(p: argparse.ArgumentParser, preset_default=None) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--topology", type=Path, metavar="FILE", help="text or JSON topology file")
    g.add_argument("--generate", type=_generate_spec, metavar="n,e,dc", help="synthetic topology size")
    g.add_argument("--preset", choices=sorted(PRESETS), default=preset_default, help="named synthetic topology")
    g.add_argument("--fixture", choices=sorted(FIXTURES), help="small reference instance")


def _add_instance(p: argparse.ArgumentParser) -> None:
    _add_topology(p, preset_default=None)
    p.add_argument("--sources", type=int, default=DEFAULTS["sources"])
    p.add_argument("--dests", type=int, default=DEFAULTS["dests"])
    p.add_argument("--vms", type=int, default=DEFAULTS["vms"])
    p.add_argument("--chain", type=int, default=None, help=f"chain length (default: file value or {DEFAULTS['chain']})")
    p.add_argument("--seed", type=int, default=0)


def _params(args) -> GeneratorParams:
    params = args.generate or PRESETS[args.preset or "cogent"]
    return replace(params, vms=args.vms)


def build_instance(args) -> SofInstance:
    """Instance from a fixture, a topology file or a generated topology."""
    if getattr(args, "fixture", None):
        inst = load_fixture(args.fixture)
        if args.chain is not None and args.chain != inst.chain_len:
            inst = SofInstance(inst.network, inst.sources, inst.destinations, args.chain, inst.source_setup_costs)
        return inst
    rng = random.Random(args.seed)
    chain = args.chain
    if args.topology is not None:
        topo = load_topology(args.topology)
        chain = chain if chain is not None else (topo.chain if topo.chain is not None else DEFAULTS["chain"])
        if topo.sources and topo.dests:
            return topo.instance(chain)
        return sample_instance(topo.network, args.sources, args.dests, chain, rng)
    chain = chain if chain is not None else DEFAULTS["chain"]
    net = generate_topology(_params(args), args.seed)
    return sample_instance(net, args.sources, args.dests, chain, rng)


def _summary(instance: SofInstance, forest) -> dict:
    fc = forest_cost(instance, forest)
    rep = validate_forest(instance, forest)
    return {
        "sources": sorted_nodes(instance.sources),
        "destinations": sorted_nodes(instance.destinations),
        "chain": instance.chain_len,
        "setup": fc.setup,
        "connection": fc.connection,
        "total": fc.total,
        "valid": rep.ok,
        "violations": [str(v) for v in rep.violations + rep.structural],
        "vms_used": len(forest.vnf_assignments()),
    }


def _emit(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    inst = build_instance(args)
    t0 = time.perf_counter()
    forest = solve(inst, args.algorithm)
    result = {"algorithm": args.algorithm, **_summary(inst, forest)}
    if args.timing:
        result["runtime_ms"] = (time.perf_counter() - t0) * 1000.0
    if args.dump_forest:
        result["forest"] = forest_to_dict(forest)
    _emit(_json(result), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = build_instance(args)
    forest = oracle_optimal(inst)
    result = {"algorithm": "oracle", **_summary(inst, forest)}
    if args.dump_forest:
        result["forest"] = forest_to_dict(forest)
    _emit(_json(result), args.out)
    return EXIT_OK


def _scenario_source(args) -> dict:
    if args.topology is not None:
        if args.fixture:
            raise ValueError("sweeps need a topology, not a fixture")
        return {"params": None, "topology": load_topology(args.topology)}
    if args.fixture:
        raise ValueError("sweeps need a topology, not a fixture")
    params = args.generate or PRESETS[args.preset or "cogent"]
    return {"params": params}


def cmd_sweep(args) -> int:
    defaults = dict(DEFAULTS, sources=args.sources, dests=args.dests, vms=args.vms)
    if args.chain is not None:
        defaults["chain"] = args.chain
    values = tuple(int(v) if v.is_integer() else v for v in args.values) if args.values else ()
    values = values or (AXES[args.axis] if args.axis else ())
    sc = Scenario(
        **_scenario_source(args),
        axis=args.axis,
        values=values,
        defaults=defaults,
        seeds=tuple(range(args.seed, args.seed + args.seeds)),
        algorithms=args.algorithms,
        workers=args.workers,
        timing=args.timing,
    )
    _emit(rows_to_csv(run_scenario(sc), timing=args.timing), args.out)
    return EXIT_OK


def cmd_online(args) -> int:
    if args.events is not None:
        inst = build_instance(args)
        state = DeploymentState.deploy(inst, solver=lambda i: solve(i, args.algorithm), demand=args.demand)
        start = state.cost()
        run_events(state, parse_events(args.events.read_text()), random.Random(args.seed), lambda i: solve(i, args.algorithm))
        out = {"initial_cost": start, "final": _summary(state.instance, state.forest), "log": state.log}
        if args.dump_forest:
            out["forest"] = forest_to_dict(state.forest)
        _emit(_json(out), args.out)
        return EXIT_OK
    ranges = ONLINE_RANGES.get(args.preset or "softlayer", ONLINE_RANGES["softlayer"])
    if args.request_dests:
        ranges = (args.request_dests, ranges[1])
    if args.request_sources:
        ranges = (ranges[0], args.request_sources)
    src = _scenario_source(args) if (args.topology or args.generate) else {"params": PRESETS[args.preset or "softlayer"]}
    sc = Scenario(
        **src,
        defaults=dict(DEFAULTS, chain=args.chain or DEFAULTS["chain"]),
        seeds=tuple(range(args.seed, args.seed + args.seeds)),
        algorithms=args.algorithms,
        mode="online",
        requests=args.requests,
        demand=args.demand,
        online_ranges=ranges,
        workers=args.workers,
        timing=args.timing,
    )
    _emit(rows_to_csv(run_scenario(sc), timing=args.timing), args.out)
    return EXIT_OK


def cmd_distsim(args) -> int:
    inst = build_instance(args)
    domains = partition(inst.network, args.domains, args.seed)
    forest, stats = run_distributed_sofda(inst, domains)
    result = {"domains": args.domains, **_summary(inst, forest), "messages": stats.as_dict()}
    if args.dump_forest:
        result["forest"] = forest_to_dict(forest)
    _emit(_json(result), args.out)
    return EXIT_OK


def cmd_export_ip(args) -> int:
    if args.out is None:
        raise ValueError("export-ip needs --out FILE.lp")
    inst = build_instance(args)
    model = export_ip(inst, args.out)
    net = inst.network
    result = {
        "lp": str(args.out),
        "rows": count_rows(Path(args.out).read_text()),
        "expected_rows": expected_counts(len(inst.destinations), inst.chain_len, len(net.nodes), net.num_edges()),
        "variables": len(model.variables()),
    }
    if args.solve:
        result["optimum"] = solve_lp_file(args.out)
    sys.stdout.write(_json(result))
    return EXIT_OK


def cmd_fixture(args) -> int:
    inst = load_fixture(args.name)
    net = inst.network
    result = {
        "name": args.name,
        "nodes": len(net.nodes),
        "edges": net.num_edges(),
        "vms": sorted_nodes(net.vms),
        "sources": sorted_nodes(inst.sources),
        "destinations": sorted_nodes(inst.destinations),
        "chain": inst.chain_len,
    }
    for algo in args.algorithms:
        try:
            forest = solve(inst, algo)
        except (InfeasibleError, LimitError) as exc:
            result[algo] = {"error": str(exc)}
            continue
        result[algo] = forest_cost(inst, forest).total
    _emit(_json(result), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sofnet", description="Service overlay forest embedding experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    algos = sorted(SOLVERS)

    p = sub.add_parser("solve", help="solve one instance and print JSON")
    _add_instance(p)
    p.add_argument("--algorithm", choices=algos, default="sofda")
    p.add_argument("--out", type=Path)
    p.add_argument("--dump-forest", action="store_true", help="include the forest arcs and VNF map")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="exact optimum of a tiny instance")
    _add_instance(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--dump-forest", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="one-time deployment sweep, CSV output")
    _add_instance(p)
    p.add_argument("--axis", choices=sorted(AXES))
    p.add_argument("--values", type=_csv_list(float), help="override the axis values")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    p.add_argument("--algorithms", type=_csv_list(str), default=("sofda", "est", "enemp", "st"))
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="add a runtime column (not reproducible)")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("online", help="request stream or event script with load-based costs")
    _add_instance(p)
    p.add_argument("--events", type=Path, help="event script applied to a deployed forest")
    p.add_argument("--algorithm", choices=algos, default="sofda", help="solver for --events")
    p.add_argument("--algorithms", type=_csv_list(str), default=("sofda", "est", "enemp"))
    p.add_argument("--requests", type=int, default=10)
    p.add_argument("--request-dests", type=_csv_list(int), metavar="LO,HI")
    p.add_argument("--request-sources", type=_csv_list(int), metavar="LO,HI")
    p.add_argument("--demand", type=float, default=5.0)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true")
    p.add_argument("--dump-forest", action="store_true")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("distsim", help="multi-controller run with message counts")
    _add_instance(p)
    p.add_argument("--domains", type=int, default=2)
    p.add_argument("--dump-forest", action="store_true")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_distsim)

    p = sub.add_parser("export-ip", help="write the integer program as an LP file")
    _add_instance(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--solve", action="store_true", help="solve with HiGHS if installed")
    p.set_defaults(func=cmd_export_ip)

    p = sub.add_parser("fixture", help="describe a reference instance")
    p.add_argument("name", choices=sorted(FIXTURES))
    p.add_argument("--algorithms", type=_csv_list(str), default=("oracle", "sofda", "sofda-ss"))
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_fixture)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_BAD_INPUT
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (TopologyError, StructureError, LimitError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
