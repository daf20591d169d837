"""Experiment runner: traffic generation, the TE stage, the RA solvers and the
CSV/JSON artifacts (utilization CDF, cost table, runtime table)."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path as FsPath
from typing import Sequence

import numpy as np

from .costmodel import CostFunctionSet, default_cost_set
from .exact import BudgetExceeded, InfeasibleError, SearchBudget, solve_ra_exact, solve_te_exact
from .ga import GaParams, run_ga_pipeline, run_te_ga, trace_to_csv
from .rfpa import run_rfpa
from .solution import (
    RaSolution,
    TeSolution,
    accumulate_loads,
    solution_to_json,
    validate,
)
from .topology import Network, build_path_catalog, load_topology
from .traffic import (
    CHAIN_COUNT,
    LINK_CAPACITY,
    TABLE_II,
    Demand,
    ServiceChain,
    TrafficProfile,
    build_service_chains,
    chains_to_json,
    demands_to_json,
    generate_background_traffic,
    table_profile,
)

log = logging.getLogger(__name__)

SOLVERS = ("exact", "ga", "rfpa")
BIN_WIDTH = 0.05
BIN_MAX = 1.2


class ConfigError(ValueError):
    pass


class ValidationFailure(RuntimeError):
    """A solver returned a solution that breaks a routing or placement constraint."""


@dataclass(frozen=True)
class ExperimentConfig:
    topology: str
    capacity_override: float | None = LINK_CAPACITY
    traffic_profile: TrafficProfile | None = None  # None: the per-topology defaults
    chain_count: int = CHAIN_COUNT
    vnfs_per_chain: int = 2
    r_max_sweep: tuple[int, ...] = (0, 1, 2)
    solvers: tuple[str, ...] = SOLVERS
    ga_params: GaParams = GaParams()
    seeds: tuple[int, ...] = (0,)
    output_dir: str | None = None
    k_paths: int = 5
    te_max_nodes: int = 20_000
    exact_max_nodes: int = 50_000_000
    exact_time_limit: float = 1800.0

    def __post_init__(self):
        object.__setattr__(self, "r_max_sweep", tuple(int(r) for r in self.r_max_sweep))
        object.__setattr__(self, "solvers", tuple(self.solvers))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.r_max_sweep:
            raise ConfigError("rMaxSweep must not be empty")
        if any(r < 0 for r in self.r_max_sweep):
            raise ConfigError("rMaxSweep values must be non-negative")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown or not self.solvers:
            raise ConfigError(f"solvers must be a non-empty subset of {SOLVERS}; got {list(self.solvers)}")
        if self.traffic_profile is None and self.topology not in TABLE_II:
            raise ConfigError(f"topology {self.topology!r} has no default traffic profile; give trafficProfile")

    def profile(self, seed: int) -> TrafficProfile:
        if self.traffic_profile is None:
            return table_profile(self.topology, seed)
        return replace(self.traffic_profile, seed=seed)

    def to_dict(self) -> dict:
        return {
            "topologyPath": self.topology,
            "capacityOverride": self.capacity_override,
            "trafficProfile": None if self.traffic_profile is None else _profile_to_dict(self.traffic_profile),
            "chainCount": self.chain_count,
            "vnfsPerChain": self.vnfs_per_chain,
            "rMaxSweep": list(self.r_max_sweep),
            "solvers": list(self.solvers),
            "gaParams": _ga_to_dict(self.ga_params),
            "seeds": list(self.seeds),
            "outputDir": self.output_dir,
            "kPaths": self.k_paths,
            "teMaxNodes": self.te_max_nodes,
            "exactMaxNodes": self.exact_max_nodes,
            "exactTimeLimit": self.exact_time_limit,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {
            "topologyPath", "capacityOverride", "trafficProfile", "chainCount", "vnfsPerChain", "rMaxSweep",
            "solvers", "gaParams", "seeds", "outputDir", "kPaths", "teMaxNodes", "exactMaxNodes", "exactTimeLimit",
        }
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "topologyPath" not in doc:
            raise ConfigError("config needs topologyPath")
        kw: dict = {"topology": doc["topologyPath"]}
        simple = {
            "capacityOverride": "capacity_override",
            "chainCount": "chain_count",
            "vnfsPerChain": "vnfs_per_chain",
            "rMaxSweep": "r_max_sweep",
            "solvers": "solvers",
            "seeds": "seeds",
            "outputDir": "output_dir",
            "kPaths": "k_paths",
            "teMaxNodes": "te_max_nodes",
            "exactMaxNodes": "exact_max_nodes",
            "exactTimeLimit": "exact_time_limit",
        }
        for key, attr in simple.items():
            if key in doc:
                kw[attr] = doc[key]
        try:
            if doc.get("trafficProfile") is not None:
                kw["traffic_profile"] = _profile_from_dict(doc["trafficProfile"])
            if doc.get("gaParams") is not None:
                kw["ga_params"] = _ga_from_dict(doc["gaParams"])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


_PROFILE_KEYS = {
    "connections": "connections",
    "bgBandwidth": "bg_bandwidth",
    "dcBandwidth": "dc_bandwidth",
    "demandsPerChain": "demands_per_chain",
    "seed": "seed",
    "background": "background",
}
_GA_KEYS = {
    "populationSize": "population_size",
    "generations": "generations",
    "tournamentSize": "tournament_size",
    "crossoverRate": "crossover_rate",
    "mutationRate": "mutation_rate",
    "eliteCount": "elite_count",
    "seed": "seed",
}


def _profile_to_dict(p: TrafficProfile) -> dict:
    d = asdict(p)
    return {k: d[v] for k, v in _PROFILE_KEYS.items()}


def _profile_from_dict(doc: dict) -> TrafficProfile:
    extra = set(doc) - set(_PROFILE_KEYS)
    if extra:
        raise ConfigError(f"unknown trafficProfile keys: {sorted(extra)}")
    return TrafficProfile(**{_PROFILE_KEYS[k]: v for k, v in doc.items()})


def _ga_to_dict(p: GaParams) -> dict:
    d = asdict(p)
    return {k: d[v] for k, v in _GA_KEYS.items()}


def _ga_from_dict(doc: dict) -> GaParams:
    extra = set(doc) - set(_GA_KEYS)
    if extra:
        raise ConfigError(f"unknown gaParams keys: {sorted(extra)}")
    return GaParams(**{_GA_KEYS[k]: v for k, v in doc.items()})


def load_config(path: str | FsPath) -> ExperimentConfig:
    text = FsPath(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(doc)


# --- instances --------------------------------------------------------------


@dataclass
class Instance:
    net: Network
    profile: TrafficProfile
    bg_demands: list[Demand]
    chains: list[ServiceChain]  # r_max 0; use with_r_max for the sweep
    warnings: list[str] = field(default_factory=list)


def build_instance(
    base: Network,
    profile: TrafficProfile,
    chain_count: int = CHAIN_COUNT,
    vnfs_per_chain: int = 2,
    k: int = 5,
) -> Instance:
    """Traffic for one seed plus the candidate paths every solver may use."""
    bg = generate_background_traffic(base, profile)
    chains = build_service_chains(base, chain_count, vnfs_per_chain, profile)
    pairs = [(d.source, d.destination) for d in bg]
    pairs += [(n, s.egress) for s in chains for n in base.nodes if n != s.egress]
    net, warnings = build_path_catalog(base, pairs, k=k)
    return Instance(net, profile, bg, chains, list(warnings))


@dataclass
class TeStage:
    solution: TeSolution
    cost: float
    loads: np.ndarray
    method: str  # "exact", or "exact-incumbent"/"te-ga" when the search budget ran out
    elapsed: float


def solve_te_stage(
    inst: Instance,
    cost_set: CostFunctionSet,
    max_nodes: int = 20_000,
    ga_params: GaParams = GaParams(),
) -> TeStage:
    """Exact TE when the search finishes within ``max_nodes``; otherwise the
    cheaper of the search incumbent and TE-GA."""
    start = time.perf_counter()
    # node budget only, so the outcome never depends on machine speed
    res = solve_te_exact(inst.net, cost_set, inst.bg_demands, SearchBudget(max_nodes=max_nodes, time_limit=1e9))
    if res.proven_optimal:
        return TeStage(res.solution, res.cost, res.loads, "exact", time.perf_counter() - start)
    ga = run_te_ga(inst.net, cost_set, inst.bg_demands, ga_params)
    if ga.cost < res.cost:
        return TeStage(ga.solution, ga.cost, ga.loads, "te-ga", time.perf_counter() - start)
    return TeStage(res.solution, res.cost, res.loads, "exact-incumbent", time.perf_counter() - start)


# --- records ----------------------------------------------------------------


@dataclass
class RunRecord:
    topology: str
    solver: str
    r_max: int
    seed: int
    cost: float
    replica_counts: dict[str, int]
    per_link_utilization: list[float]
    elapsed_seconds: float
    proven_optimal: bool
    status: str = "ok"  # ok | budget-exhausted | infeasible
    overloaded_links: int = 0
    node_count: int = 0
    solution: RaSolution | None = field(default=None, repr=False, compare=False)
    trace: list | None = field(default=None, repr=False, compare=False)

    @property
    def total_replicas(self) -> int:
        return sum(self.replica_counts.values())

    def to_dict(self) -> dict:
        return {
            "topology": self.topology,
            "solver": self.solver,
            "rMax": self.r_max,
            "seed": self.seed,
            "status": self.status,
            "cost": None if not math.isfinite(self.cost) else self.cost,
            "replicaCounts": dict(sorted(self.replica_counts.items())),
            "perLinkUtilization": self.per_link_utilization,
            "elapsedSeconds": self.elapsed_seconds,
            "provenOptimal": self.proven_optimal,
            "overloadedLinks": self.overloaded_links,
            "nodeCount": self.node_count,
        }


def _check(inst: Instance, chains, te: TeSolution, ra: RaSolution, where: str) -> int:
    """Hard-fail on any constraint violation; return the number of overloaded links."""
    report = validate(inst.net, chains, te, ra, inst.bg_demands, enforce_capacity=True)
    fatal = [v for v in report.violations if v.equation != "capacity"]
    if fatal:
        raise ValidationFailure(f"{where}: " + "; ".join(f"[{v.equation}] {v.message}" for v in fatal))
    return len(report.violations) - len(fatal)


def _record(cfg_topology, inst, te, chains, solver, r_max, seed, sol, cost, elapsed, proven, status, trace=None):
    util: list[float] = []
    overloaded = 0
    if sol is not None:
        overloaded = _check(inst, chains, te.solution, sol, f"{solver} r_max={r_max} seed={seed}")
        ledger = accumulate_loads(inst.net, te.solution, sol, inst.bg_demands, chains)
        util = [float(u) for u in ledger.utilization(inst.net)]
    return RunRecord(
        topology=cfg_topology,
        solver=solver,
        r_max=r_max,
        seed=seed,
        cost=float(cost),
        replica_counts=sol.replica_counts() if sol is not None else {},
        per_link_utilization=util,
        elapsed_seconds=elapsed,
        proven_optimal=proven,
        status=status,
        overloaded_links=overloaded,
        node_count=len(inst.net.nodes),
        solution=sol,
        trace=trace,
    )


def run_experiment(
    config: ExperimentConfig,
    cost_set: CostFunctionSet | None = None,
    write: bool = True,
    config_text: str | None = None,
) -> list[RunRecord]:
    """Run every (seed, r_max, solver) cell; artifacts go to ``config.output_dir`` when set.

    ``config_text`` is echoed verbatim into the output directory when given.
    """
    cost_set = cost_set or default_cost_set()
    base = load_topology(config.topology, capacity=config.capacity_override)
    name = base.name or config.topology
    records: list[RunRecord] = []
    te_rows = []
    for seed in config.seeds:
        inst = build_instance(base, config.profile(seed), config.chain_count, config.vnfs_per_chain, config.k_paths)
        for w in inst.warnings:
            log.warning("seed %d: %s", seed, w)
        te = solve_te_stage(inst, cost_set, config.te_max_nodes, replace(config.ga_params, seed=seed))
        te_rows.append((seed, inst, te))
        log.info("seed %d: TE %s cost %.6f", seed, te.method, te.cost)
        warm: RaSolution | None = None
        for r_max in sorted(config.r_max_sweep):
            chains = [s.with_r_max(r_max) for s in inst.chains]
            for solver in SOLVERS:
                if solver not in config.solvers:
                    continue
                rec = _run_cell(config, cost_set, inst, te, chains, solver, r_max, seed, name, warm)
                if solver == "exact" and rec.solution is not None:
                    # a solution for r_max stays feasible for every larger r_max
                    warm = rec.solution
                records.append(rec)
    records.sort(key=lambda r: (r.topology, SOLVERS.index(r.solver), r.r_max, r.seed))
    if write and config.output_dir:
        write_outputs(config, records, te_rows, config_text)
    return records


def _run_cell(config, cost_set, inst, te, chains, solver, r_max, seed, name, warm) -> RunRecord:
    start = time.perf_counter()
    try:
        if solver == "exact":
            budget = SearchBudget(max_nodes=config.exact_max_nodes, time_limit=config.exact_time_limit)
            res = solve_ra_exact(inst.net, cost_set, chains, te.loads, budget, warm_start=warm)
            status = "ok" if res.proven_optimal else "budget-exhausted"
            return _record(name, inst, te, chains, solver, r_max, seed, res.solution, res.cost,
                           time.perf_counter() - start, res.proven_optimal, status)
        if solver == "ga":
            res = run_ga_pipeline(inst.net, cost_set, chains, te.loads, replace(config.ga_params, seed=seed))
            return _record(name, inst, te, chains, solver, r_max, seed, res.solution, res.cost,
                           time.perf_counter() - start, False, "ok", res.trace)
        res = run_rfpa(inst.net, cost_set, chains, te.loads, seed=seed)
        return _record(name, inst, te, chains, solver, r_max, seed, res.solution, res.cost,
                       time.perf_counter() - start, False, "ok")
    except BudgetExceeded as exc:
        log.warning("%s r_max=%d seed=%d: %s", solver, r_max, seed, exc)
        status = "budget-exhausted"
    except InfeasibleError as exc:
        log.warning("%s r_max=%d seed=%d: %s", solver, r_max, seed, exc)
        status = "infeasible"
    return _record(name, inst, te, chains, solver, r_max, seed, None, math.nan,
                   time.perf_counter() - start, False, status)


# --- tables -----------------------------------------------------------------


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x: float) -> str:
    return "" if not math.isfinite(x) else f"{x:.10g}"


def _groups(records: Sequence[RunRecord], key) -> list[tuple[tuple, list[RunRecord]]]:
    out: dict[tuple, list[RunRecord]] = {}
    for r in records:
        out.setdefault(key(r), []).append(r)
    return sorted(out.items())


def _solver_key(r: RunRecord):
    return (SOLVERS.index(r.solver) if r.solver in SOLVERS else len(SOLVERS), r.solver, r.r_max)


def utilization_bins() -> list[float]:
    n = int(round(BIN_MAX / BIN_WIDTH))
    return [round(i * BIN_WIDTH, 10) for i in range(n + 1)]


def emit_utilization_cdf(records: Sequence[RunRecord]) -> str:
    """Fraction of links (pooled over seeds) with utilization at or below each bin edge."""
    rows = []
    for (_, solver, r_max), group in _groups(records, _solver_key):
        util = np.array([u for r in group for u in r.per_link_utilization])
        if not len(util):
            continue
        for edge in utilization_bins():
            rows.append([solver, r_max, f"{edge:.2f}", _num(float((util <= edge + 1e-12).mean()))])
    return _csv(["solver", "rMax", "utilizationBin", "linkFraction"], rows)


def emit_cost_table(records: Sequence[RunRecord]) -> str:
    rows = []
    for (topo, _, solver, r_max), group in _groups(records, lambda r: (r.topology,) + _solver_key(r)):
        costs = np.array([r.cost for r in group if math.isfinite(r.cost)])
        reps = np.array([r.total_replicas for r in group if math.isfinite(r.cost)], dtype=float)
        mean = float(costs.mean()) if len(costs) else math.nan
        std = float(costs.std()) if len(costs) else math.nan
        rows.append([topo, solver, r_max, _num(mean), _num(std), _num(float(reps.mean()) if len(reps) else math.nan)])
    return _csv(["topology", "solver", "rMax", "meanCost", "stdCost", "meanReplicas"], rows)


def emit_runtime_table(records: Sequence[RunRecord]) -> str:
    rows = []
    key = lambda r: (r.node_count, r.topology) + _solver_key(r)
    for (nodes, topo, _, solver, r_max), group in _groups(records, key):
        rows.append([topo, nodes, solver, r_max, _num(float(np.mean([r.elapsed_seconds for r in group])))])
    return _csv(["topology", "nodeCount", "solver", "rMax", "meanElapsed"], rows)


def emit_records_csv(records: Sequence[RunRecord]) -> str:
    rows = [
        [r.topology, r.solver, r.r_max, r.seed, r.status, _num(r.cost), r.total_replicas,
         r.overloaded_links, int(r.proven_optimal)]
        for r in records
    ]
    return _csv(
        ["topology", "solver", "rMax", "seed", "status", "cost", "replicas", "overloadedLinks", "provenOptimal"], rows
    )


def emit_ga_traces(records: Sequence[RunRecord]) -> str:
    lines = ["seed,rMax," + trace_to_csv([]).strip()]
    for r in records:
        if r.solver != "ga" or not r.trace:
            continue
        for line in trace_to_csv(r.trace).splitlines()[1:]:
            lines.append(f"{r.seed},{r.r_max},{line}")
    return "\n".join(lines) + "\n"


# --- output -----------------------------------------------------------------

# Files whose content depends only on (config, seeds). runtime_table.csv and
# the elapsed fields in records.json hold wall-clock measurements.
DETERMINISTIC_OUTPUTS = ("records.csv", "utilization_cdf.csv", "cost_table.csv", "ga_trace.csv", "te_stage.csv")


def write_outputs(config: ExperimentConfig, records: Sequence[RunRecord], te_rows=(), config_text: str | None = None):
    out = FsPath(config.output_dir)
    (out / "solutions").mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config_text if config_text is not None else json.dumps(config.to_dict(), indent=2) + "\n")
    (out / "records.csv").write_text(emit_records_csv(records))
    (out / "utilization_cdf.csv").write_text(emit_utilization_cdf(records))
    (out / "cost_table.csv").write_text(emit_cost_table(records))
    (out / "runtime_table.csv").write_text(emit_runtime_table(records))
    (out / "ga_trace.csv").write_text(emit_ga_traces(records))
    (out / "te_stage.csv").write_text(
        _csv(["seed", "method", "cost"], [[seed, te.method, _num(te.cost)] for seed, _, te in te_rows])
    )
    by_seed = {seed: (inst, te) for seed, inst, te in te_rows}
    for r in records:
        if r.solution is None or r.seed not in by_seed:
            continue
        inst, te = by_seed[r.seed]
        chains = [s.with_r_max(r.r_max) for s in inst.chains]
        write_solution(out / "solutions" / f"{r.solver}_r{r.r_max}_s{r.seed}.json", inst, te.solution, r.solution,
                       chains, r.cost, r.topology)
    (out / "records.json").write_text(json.dumps([r.to_dict() for r in records], indent=1) + "\n")
    return out


def write_solution(path, inst: Instance, te: TeSolution, ra: RaSolution | None, chains, cost: float, topology: str):
    """Solution document plus the instance it belongs to, so ``validate`` can replay it."""
    ledger = accumulate_loads(inst.net, te, ra, inst.bg_demands, chains if ra is not None else ())
    doc = solution_to_json(inst.net, te, ra, cost, ledger)
    doc["instance"] = {
        "topology": topology,
        "capacity": float(inst.net.links[0].capacity) if inst.net.links else None,
        "backgroundDemands": demands_to_json(inst.bg_demands),
        "chains": chains_to_json(list(chains)),
    }
    FsPath(path).write_text(json.dumps(doc, indent=1) + "\n")
    return doc
