"""Scenario runner for one-time sweeps and online request streams."""

from __future__ import annotations

import csv
import io
import math
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .baselines import run_enemp, run_est, run_st
from .core import InfeasibleError, ServiceForest, SofInstance, forest_cost, sorted_nodes, validate_forest
from .dynamics import DeploymentState, handle_request
from .exactopt import oracle_optimal
from .sofda import sofda, sofda_ss
from .topology import PRESETS, GeneratorParams, Topology, access_nodes, generate_topology, sample_instance, scale_setup

AXES = {
    "sources": (2, 8, 14, 20, 26),
    "dests": (2, 4, 6, 8, 10),
    "vms": (5, 15, 25, 35, 45),
    "chain": (3, 4, 5, 6, 7),
    "setup": (1, 2, 3, 4, 5, 6, 7, 8, 9),
}
DEFAULTS = {"sources": 14, "dests": 6, "vms": 25, "chain": 3, "setup": 1}

# (dests, sources) ranges per request in the online stream
ONLINE_RANGES = {
    "softlayer": ((13, 17), (8, 12)),
    "cogent": ((20, 60), (10, 30)),
}


def _best_single_source(instance: SofInstance) -> ServiceForest:
    best = None
    for s in sorted_nodes(instance.sources):
        try:
            f = sofda_ss(instance, source=s)
        except InfeasibleError:
            continue
        c = forest_cost(instance, f).total
        if best is None or c < best[0]:
            best = (c, f)
    if best is None:
        raise InfeasibleError("no single source can serve every destination")
    return best[1]


SOLVERS = {
    "sofda": sofda,
    "sofda-ss": _best_single_source,
    "st": run_st,
    "est": run_est,
    "enemp": run_enemp,
    "oracle": oracle_optimal,
}


def solve(instance: SofInstance, algorithm: str) -> ServiceForest:
    try:
        fn = SOLVERS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(SOLVERS)}") from None
    return fn(instance)


@dataclass(frozen=True)
class Scenario:
    params: Optional[GeneratorParams] = PRESETS["cogent"]
    topology: Optional[Topology] = None  # a loaded file replaces the generator
    axis: Optional[str] = None
    values: tuple = ()
    defaults: dict = field(default_factory=lambda: dict(DEFAULTS))
    seeds: tuple = (0,)
    algorithms: tuple = ("sofda", "est")
    mode: str = "one_time"
    requests: int = 10
    demand: float = 5.0
    online_ranges: tuple = ONLINE_RANGES["softlayer"]
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if (self.params is None) == (self.topology is None):
            raise ValueError("give exactly one of generator params or a topology")
        if self.mode not in ("one_time", "online"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.seeds or not self.algorithms:
            raise ValueError("seeds and algorithms must be nonempty")
        for a in self.algorithms:
            if a not in SOLVERS:
                raise ValueError(f"unknown algorithm {a!r}; choose from {', '.join(SOLVERS)}")
        if set(self.defaults) != set(AXES):
            raise ValueError(f"defaults must set exactly {sorted(AXES)}")
        if self.axis is not None:
            if self.axis not in AXES:
                raise ValueError(f"unknown axis {self.axis!r}; choose from {', '.join(AXES)}")
            if not self.values:
                raise ValueError("sweep axis needs at least one value")
            if self.axis == "vms" and self.topology is not None:
                raise ValueError("the VM axis needs a generated topology")
        if self.topology is not None and self.defaults["vms"] != DEFAULTS["vms"]:
            raise ValueError("a topology file fixes the VM set")
        if self.requests < 1 or self.workers < 1:
            raise ValueError("requests and workers must be positive")

    def points(self) -> list:
        if self.axis is None:
            return [dict(self.defaults)]
        return [{**self.defaults, self.axis: v} for v in self.values]


@dataclass
class ResultRow:
    axis: str
    value: float
    algorithm: str
    seed: int
    status: str
    setup: float = math.nan
    connection: float = math.nan
    total: float = math.nan
    vms_used: int = 0
    trees: int = 0
    request: int = 0  # online stream position, 1-based; 0 for one-time rows
    accumulated: float = math.nan
    runtime_ms: float = math.nan


def _network(scenario: Scenario, point: dict, seed: int):
    if scenario.topology is not None:
        net = scenario.topology.network
    else:
        params = scenario.params
        if params.vms_per_dc is None:
            params = replace(params, vms=point["vms"])
        net = generate_topology(params, seed)
    if point["setup"] != 1:
        net = scale_setup(net, point["setup"])
    return net


def _fill(row: ResultRow, instance: SofInstance, forest: ServiceForest) -> None:
    rep = validate_forest(instance, forest)
    if not rep.ok:
        row.status = "invalid: " + "; ".join(map(str, (rep.violations + rep.structural)[:3]))
    fc = forest_cost(instance, forest)
    row.setup, row.connection, row.total = fc.setup, fc.connection, fc.total
    row.vms_used = len(forest.vnf_assignments())
    row.trees = len({s for s in forest.served.values() if s is not None})


def _one_time(scenario: Scenario, point: dict, seed: int) -> list:
    axis = scenario.axis or "default"
    value = point[scenario.axis] if scenario.axis else 0
    try:
        net = _network(scenario, point, seed)
        instance = sample_instance(net, point["sources"], point["dests"], point["chain"], random.Random(seed))
    except ValueError as exc:
        return [ResultRow(axis, value, a, seed, f"error: {exc}") for a in scenario.algorithms]
    rows = []
    for a in scenario.algorithms:
        row = ResultRow(axis, value, a, seed, "ok")
        t0 = time.perf_counter()
        try:
            forest = solve(instance, a)
        except InfeasibleError as exc:
            row.status = f"infeasible: {exc}"
        except ValueError as exc:
            row.status = f"error: {exc}"
        else:
            _fill(row, instance, forest)
        if scenario.timing:
            row.runtime_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(row)
    return rows


def _online(scenario: Scenario, point: dict, seed: int) -> list:
    axis = scenario.axis or "default"
    value = point[scenario.axis] if scenario.axis else 0
    if scenario.topology is not None:
        base = scenario.topology.network.with_costs()
    else:
        params = replace(scenario.params, random_load=False)
        if params.vms_per_dc is None:
            params = replace(params, vms_per_dc=5)
        base = generate_topology(params, seed)
    pool = sorted_nodes(access_nodes(base))
    (d_lo, d_hi), (s_lo, s_hi) = scenario.online_ranges
    rows = []
    for a in scenario.algorithms:
        rng = random.Random(seed)
        placeholder = SofInstance(base, [pool[0]], [], point["chain"])
        state = DeploymentState(placeholder, ServiceForest(point["chain"]), scenario.demand)
        total = 0.0
        for r in range(1, scenario.requests + 1):
            n_d = min(rng.randint(d_lo, d_hi), len(pool) - 1)
            n_s = min(rng.randint(s_lo, s_hi), len(pool) - n_d)
            row = ResultRow(axis, value, a, seed, "ok", request=r)
            t0 = time.perf_counter()
            try:
                handle_request(state, scenario.demand, n_d, n_s, rng, lambda inst: solve(inst, a), pool)
            except InfeasibleError as exc:
                row.status = f"infeasible: {exc}"
            except ValueError as exc:
                row.status = f"error: {exc}"
            if scenario.timing:
                row.runtime_ms = (time.perf_counter() - t0) * 1000.0
            if row.status != "ok":
                rows.append(row)
                break
            _fill(row, state.instance, state.forest)
            total += row.total
            row.accumulated = total
            rows.append(row)
    return rows


def _task(args) -> list:
    scenario, point, seed = args
    if scenario.mode == "online":
        return _online(scenario, point, seed)
    return _one_time(scenario, point, seed)


def _order(row: ResultRow) -> tuple:
    return (row.value, row.seed, row.request)


def run_scenario(scenario: Scenario) -> list:
    """Every (point, algorithm, seed) row; failures become rows with a status."""
    jobs = [(scenario, p, s) for p in scenario.points() for s in scenario.seeds]
    if scenario.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=scenario.workers) as ex:
            chunks = list(ex.map(_task, jobs))
    else:
        chunks = [_task(j) for j in jobs]
    algo_rank = {a: i for i, a in enumerate(scenario.algorithms)}
    rows = [r for c in chunks for r in c]
    rows.sort(key=lambda r: (_order(r)[0], r.seed, algo_rank[r.algorithm], r.request))
    return rows


FIELDS = [f.name for f in fields(ResultRow)]


def _cell(x):
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return x


def rows_to_csv(rows, timing: bool = False) -> str:
    cols = [c for c in FIELDS if timing or c != "runtime_ms"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(v) for k, v in asdict(r).items()})
    return buf.getvalue()


def summarize(rows) -> dict:
    """Mean total and mean VM count per (value, algorithm) over ok rows."""
    acc: dict = {}
    for r in rows:
        if r.status != "ok" or r.request:
            continue
        k = (r.value, r.algorithm)
        acc.setdefault(k, []).append(r)
    return {
        k: {"mean_total": sum(x.total for x in v) / len(v), "mean_vms": sum(x.vms_used for x in v) / len(v), "n": len(v)}
        for k, v in sorted(acc.items())
    }
