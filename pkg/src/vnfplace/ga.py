"""Three-stage genetic algorithm: background routing (TE-GA), chain placement
without replicas (RA-GA), then incremental replica sets (RR-GA).

All stages share one integer-vector GA with tournament selection, one-point
crossover, uniform resampling mutation and elitism. Decoders repair any gene
vector into a valid network state, so fitness is always a real total network
cost.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .costmodel import CostFunctionSet
from .exact import InfeasibleError
from .solution import RaSolution, TeSolution
from .topology import Network, Path
from .traffic import Demand, ServiceChain

RR_EPSILON = 1e-9


@dataclass(frozen=True)
class GaParams:
    population_size: int = 100
    generations: int = 200
    tournament_size: int = 3
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # None: 1 / chromosome length
    elite_count: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0 <= self.crossover_rate <= 1:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.mutation_rate is not None and not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if not 0 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must be smaller than population_size")
        if self.tournament_size < 1 or self.generations < 0:
            raise ValueError("tournament_size must be positive and generations non-negative")


@dataclass
class GaRun:
    genes: np.ndarray
    cost: float
    trace: list[tuple[int, float, float]] = field(default_factory=list)


def evolve(
    rng: np.random.Generator,
    upper: np.ndarray,
    evaluate: Callable[[np.ndarray], np.ndarray],
    params: GaParams,
    seeds: Sequence[np.ndarray] = (),
) -> GaRun:
    """Minimise ``evaluate`` over integer vectors with ``0 <= gene < upper``.

    ``evaluate`` returns the costs, or ``(costs, secondary)`` where the
    secondary key only breaks exact cost ties.
    """
    upper = np.asarray(upper, dtype=np.int64)
    n_genes = len(upper)
    size = params.population_size
    pop = rng.integers(0, np.maximum(upper, 1), size=(size, n_genes)) if n_genes else np.zeros((size, 0), np.int64)
    for i, s in enumerate(seeds[:size]):
        pop[i] = s
    costs, sec = _scored(evaluate(pop))
    order, rank = _ranking(costs, sec)
    best_i = int(order[0])
    best = GaRun(pop[best_i].copy(), float(costs[best_i]))
    best_sec = float(sec[best_i])
    best.trace.append((0, best.cost, _finite_mean(costs)))
    rate = params.mutation_rate if params.mutation_rate is not None else 1.0 / max(n_genes, 1)

    for gen in range(1, params.generations + 1):
        children = np.empty_like(pop)
        n_elite = params.elite_count
        children[:n_elite] = pop[order[:n_elite]]
        n_new = size - n_elite
        n_pairs = (n_new + 1) // 2
        entrants = rng.integers(0, size, size=(2 * n_pairs, params.tournament_size))
        winners = _tournament(entrants, rank)
        mothers, fathers = pop[winners[0::2]], pop[winners[1::2]]
        do_cross = rng.random(n_pairs) < params.crossover_rate
        cuts = rng.integers(1, max(n_genes, 2), size=n_pairs)
        mask = np.arange(n_genes)[None, :] >= cuts[:, None]
        mask &= do_cross[:, None]
        kids_a = np.where(mask, fathers, mothers)
        kids_b = np.where(mask, mothers, fathers)
        kids = np.empty((2 * n_pairs, n_genes), dtype=pop.dtype)
        kids[0::2], kids[1::2] = kids_a, kids_b
        kids = kids[:n_new]
        if n_genes:
            flip = rng.random(kids.shape) < rate
            fresh = rng.integers(0, np.maximum(upper, 1), size=kids.shape)
            kids = np.where(flip, fresh, kids)
        children[n_elite:] = kids
        pop = children
        costs, sec = _scored(evaluate(pop))
        order, rank = _ranking(costs, sec)
        i = int(order[0])
        if (costs[i], sec[i]) < (best.cost, best_sec):
            best.genes, best.cost, best_sec = pop[i].copy(), float(costs[i]), float(sec[i])
        best.trace.append((gen, best.cost, _finite_mean(costs)))
    return best


def _scored(result) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(result, tuple):
        costs, sec = result
        return np.asarray(costs, dtype=float), np.asarray(sec, dtype=float)
    costs = np.asarray(result, dtype=float)
    return costs, np.zeros(len(costs))


def _ranking(costs: np.ndarray, sec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order by cost, then secondary key, then index; rank[i] is i's place."""
    order = np.lexsort((np.arange(len(costs)), sec, costs))
    rank = np.empty(len(costs), dtype=np.int64)
    rank[order] = np.arange(len(costs))
    return order, rank


def _tournament(entrants: np.ndarray, rank: np.ndarray) -> np.ndarray:
    # the best-ranked entrant wins; ranks are unique, so no further tie-break
    picks = np.argmin(rank[entrants], axis=1)
    return entrants[np.arange(len(entrants)), picks]


def _finite_mean(costs: np.ndarray) -> float:
    finite = costs[np.isfinite(costs)]
    return float(finite.mean()) if len(finite) else float("inf")


def _pop_costs(cost_set: CostFunctionSet, loads: np.ndarray, caps: np.ndarray) -> np.ndarray:
    return cost_set.cost_array(loads / caps).sum(axis=1)


# --- TE-GA ------------------------------------------------------------------


@dataclass
class TeGaResult:
    solution: TeSolution
    cost: float
    loads: np.ndarray
    trace: list
    elapsed: float


def run_te_ga(
    net: Network,
    cost_set: CostFunctionSet,
    demands: Sequence[Demand],
    params: GaParams = GaParams(),
    rng: np.random.Generator | None = None,
) -> TeGaResult:
    """Evolve one path index per background demand."""
    start = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    demands = list(demands)
    cands = []
    for d in demands:
        paths = net.paths(d.source, d.destination)
        if not paths:
            raise InfeasibleError(f"demand {d.id} has no candidate path")
        cands.append(paths)
    caps = net.capacities()
    offsets = np.cumsum([0] + [len(c) for c in cands])[:-1]
    rows, cols, vals = [], [], []
    for i, (d, paths) in enumerate(zip(demands, cands)):
        for j, p in enumerate(paths):
            rows.extend(p.links)
            cols.extend([offsets[i] + j] * len(p.links))
            vals.extend([d.bandwidth] * len(p.links))
    n_cols = int(offsets[-1] + len(cands[-1])) if cands else 0
    incidence = sp.csr_matrix((vals, (rows, cols)), shape=(len(net.links), n_cols))
    upper = np.array([len(c) for c in cands], dtype=np.int64)

    def loads_of(pop: np.ndarray) -> np.ndarray:
        if not len(demands):
            return np.zeros((len(pop), len(net.links)))
        picked = (pop + offsets[None, :]).ravel()
        owner = np.repeat(np.arange(len(pop)), len(demands))
        select = sp.csr_matrix((np.ones(len(picked)), (picked, owner)), shape=(n_cols, len(pop)))
        return np.asarray((incidence @ select).T.todense())

    def evaluate(pop: np.ndarray) -> np.ndarray:
        return _pop_costs(cost_set, loads_of(pop), caps)

    # gene 0 is the shortest candidate, i.e. plain shortest-path routing
    run = evolve(rng, upper, evaluate, params, seeds=[np.zeros(len(demands), dtype=np.int64)])
    te = TeSolution({d.id: cands[i][int(g)] for i, (d, g) in enumerate(zip(demands, run.genes))})
    loads = loads_of(run.genes[None, :])[0]
    return TeGaResult(te, run.cost, loads, run.trace, time.perf_counter() - start)


# --- shared chain machinery -------------------------------------------------


def _nearest_free(path: Path, want: int, lo: int, hi: int, blocked: Callable[[str], bool]) -> int | None:
    """Position in [lo, hi] closest to ``want`` whose node is not blocked."""
    if lo > hi:
        return None
    want = min(max(want, lo), hi)
    for off in range(0, hi - lo + 1):
        for q in (want + off, want - off) if off else (want,):
            if lo <= q <= hi and not blocked(path.nodes[q]):
                return q
    return None


def _place_along(
    chain: ServiceChain,
    path: Path,
    pos_genes: Sequence[int],
    blocked: Callable[[str], bool],
    fixed: dict[int, str] | None = None,
) -> dict[int, str] | None:
    """Hosts for VNFs 1.. on ``path`` in order; ``fixed`` pins non-replicable VNFs."""
    hosts: dict[int, str] = {}
    prev = 0
    last = len(path.nodes) - 2  # the egress endpoint hosts no VNF
    n_vnf = len(chain.vnfs)
    for v in range(1, n_vnf):
        hi = last - (n_vnf - 1 - v)
        if fixed and v in fixed:
            n = fixed[v]
            if n not in path.nodes:
                return None
            q = path.nodes.index(n)
            if not prev < q <= hi:
                return None
        else:
            q = _nearest_free(path, 1 + int(pos_genes[v - 1]), prev + 1, hi, blocked)
            if q is None:
                return None
        hosts[v] = path.nodes[q]
        prev = q
    return hosts


@dataclass
class _ChainState:
    chain: ServiceChain
    paths: list[Path]
    hosts: dict[int, set[str]]
    assign: list[int]  # demand position -> index into paths


def _state_to_solution(states: Sequence[_ChainState]) -> RaSolution:
    chain_paths, demand_paths, placements = {}, {}, {}
    for st in states:
        cid = st.chain.id
        chain_paths[cid] = tuple(st.paths)
        for d, k in zip(st.chain.demands, st.assign):
            demand_paths[(cid, d.id)] = st.paths[k]
        for v, nodes in st.hosts.items():
            placements[(cid, v)] = frozenset(nodes)
    return RaSolution(chain_paths, demand_paths, placements)


def _chain_load_rows(net: Network, states: Sequence[_ChainState]) -> np.ndarray:
    loads = np.zeros(len(net.links))
    for st in states:
        for d, k in zip(st.chain.demands, st.assign):
            loads[list(st.paths[k].links)] += d.bandwidth
    return loads


@dataclass
class RaGaResult:
    solution: RaSolution
    cost: float
    replica_counts: dict[str, int]
    trace: list
    elapsed: float
    states: list = field(default_factory=list, repr=False)


# --- RA-GA ------------------------------------------------------------------


def run_ra_ga(
    net: Network,
    cost_set: CostFunctionSet,
    chains: Sequence[ServiceChain],
    bg_loads: np.ndarray,
    params: GaParams = GaParams(),
    rng: np.random.Generator | None = None,
) -> RaGaResult:
    """Pick one path per chain and place its VNFs in order along it."""
    start = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    chains = sorted(chains, key=lambda s: s.id)
    caps = net.capacities()
    bg_loads = np.asarray(bg_loads, dtype=float)
    cands: list[list[Path]] = []
    for s in chains:
        paths = [p for n in net.nodes if n != s.egress for p in net.paths(n, s.egress) if len(p.nodes) > len(s.vnfs)]
        if not paths:
            raise InfeasibleError(f"chain {s.id}: no admissible path towards {s.egress}")
        cands.append(paths)
    width = [1 + len(s.vnfs) - 1 for s in chains]
    upper = []
    for s, paths in zip(chains, cands):
        longest = max(len(p.nodes) for p in paths)
        upper += [len(paths)] + [max(longest - 1, 1)] * (len(s.vnfs) - 1)
    upper = np.array(upper, dtype=np.int64)
    path_links = [[np.array(p.links, dtype=int) for p in paths] for paths in cands]
    cache: dict[bytes, tuple | None] = {}

    def decode(genes: np.ndarray):
        key = genes.tobytes()
        if key in cache:
            return cache[key]
        used: set[str] = set()
        picks = []
        at = 0
        for s, paths, w in zip(chains, cands, width):
            g = genes[at : at + w]
            at += w
            found = None
            for shift in range(len(paths)):
                j = (int(g[0]) + shift) % len(paths)
                p = paths[j]
                if p.source in used:
                    continue
                hosts = _place_along(s, p, g[1:], lambda n: n in used or n == p.source)
                if hosts is not None:
                    found = (j, hosts)
                    break
            if found is None:
                cache[key] = None
                return None
            used.add(paths[found[0]].source)
            used.update(found[1].values())
            picks.append(found)
        cache[key] = tuple(picks)
        return cache[key]

    def evaluate(pop: np.ndarray):
        loads = np.tile(bg_loads, (len(pop), 1))
        ok = np.ones(len(pop), dtype=bool)
        carried = np.zeros(len(pop))
        for r, genes in enumerate(pop):
            picks = decode(genes)
            if picks is None:
                ok[r] = False
                continue
            for s, pl, (j, _) in zip(chains, path_links, picks):
                loads[r, pl[j]] += s.total_bandwidth
                carried[r] += s.total_bandwidth * len(pl[j])
        costs = _pop_costs(cost_set, loads, caps)
        costs[~ok] = np.inf
        # equal cost: prefer placements that put less traffic on the network
        return costs, carried

    run = evolve(rng, upper, evaluate, params)
    picks = decode(run.genes)
    if picks is None:
        raise InfeasibleError("no chain placement satisfies the node capacity constraint")
    states = []
    for s, paths, (j, hosts) in zip(chains, cands, picks):
        p = paths[j]
        st_hosts = {0: {p.source}} | {v: {n} for v, n in hosts.items()}
        states.append(_ChainState(s, [p], st_hosts, [0] * len(s.demands)))
    return RaGaResult(
        _state_to_solution(states),
        run.cost,
        {s.id: 0 for s in chains},
        run.trace,
        time.perf_counter() - start,
        states,
    )


# --- RR-GA ------------------------------------------------------------------


def _replica_round(
    net: Network,
    cost_set: CostFunctionSet,
    states: list[_ChainState],
    bg_loads: np.ndarray,
    params: GaParams,
    rng: np.random.Generator,
    incumbent: float,
):
    caps = net.capacities()
    active = [st for st in states if len(st.paths) - 1 < st.chain.r_max]
    if not active:
        return None
    fixed_load = bg_loads + _chain_load_rows(net, [st for st in states if st not in active])
    layout = []
    upper: list[int] = []
    seed_genes: list[int] = []
    for st in active:
        s = st.chain
        anchor = st.paths[0].source
        alts = [p for p in net.paths(anchor, s.egress) if p not in st.paths and len(p.nodes) > len(s.vnfs)]
        longest = max((len(p.nodes) for p in alts), default=2)
        n_pos = len(s.vnfs) - 1
        layout.append((st, alts, len(upper), n_pos))
        upper += [len(alts) + 1] + [max(longest - 1, 1)] * n_pos + [len(st.paths) + 1] * len(s.demands)
        seed_genes += [0] + [0] * n_pos + list(st.assign)
    upper_arr = np.array(upper, dtype=np.int64)
    all_hosts = {n for st in states for nodes in st.hosts.values() for n in nodes}
    cache: dict[bytes, list | None] = {}

    def decode(genes: np.ndarray):
        key = genes.tobytes()
        if key in cache:
            return cache[key]
        used = set(all_hosts)
        out = []
        for st, alts, at, n_pos in layout:
            s = st.chain
            alt_gene = int(genes[at])
            new = None
            if alt_gene > 0 and alts:
                rep_hosts = {n for v in s.vnfs if v.replicable for n in st.hosts[v.index]}
                fixed = {v.index: next(iter(st.hosts[v.index])) for v in s.vnfs[1:] if not v.replicable}
                on_selected = set().union(*(set(p.nodes) for p in st.paths))
                for shift in range(len(alts)):
                    p = alts[(alt_gene - 1 + shift) % len(alts)]
                    if rep_hosts & set(p.nodes):
                        continue
                    hosts = _place_along(
                        s, p, genes[at + 1 : at + 1 + n_pos],
                        lambda n: n in used or n in on_selected,
                        fixed,
                    )
                    if hosts is not None:
                        new = (p, hosts)
                        break
            n_paths = len(st.paths) + (new is not None)
            slots = genes[at + 1 + n_pos : at + 1 + n_pos + len(s.demands)] % n_paths
            if new is not None:
                used.update(n for v, n in new[1].items() if s.vnfs[v].replicable)
            out.append((new, slots))
        cache[key] = out
        return out

    n_links = len(net.links)
    incidence: dict[Path, np.ndarray] = {}

    def row(path: Path) -> np.ndarray:
        if path not in incidence:
            vec = np.zeros(n_links)
            vec[list(path.links)] = 1.0
            incidence[path] = vec
        return incidence[path]

    bws = [np.array([d.bandwidth for d in st.chain.demands]) for st, *_ in layout]
    scores: dict[bytes, tuple[float, float]] = {}

    def evaluate(pop: np.ndarray):
        out = np.empty(len(pop))
        carried = np.empty(len(pop))
        todo, loads, extra = [], [], []
        for r, genes in enumerate(pop):
            key = genes.tobytes()
            if key in scores:
                out[r], carried[r] = scores[key]
                continue
            load = fixed_load.copy()
            total = 0.0
            for (st, *_), bw, (new, slots) in zip(layout, bws, decode(genes)):
                paths = st.paths + ([new[0]] if new else [])
                totals = np.bincount(slots, weights=bw, minlength=len(paths))
                for k, p in enumerate(paths):
                    if totals[k]:
                        load += totals[k] * row(p)
                        total += totals[k] * len(p.links)
            todo.append((r, key))
            loads.append(load)
            extra.append(total)
        if todo:
            costs = _pop_costs(cost_set, np.array(loads), caps)
            for (r, key), c, t in zip(todo, costs, extra):
                out[r], carried[r] = scores[key] = (c, t)
        return out, carried

    run = evolve(rng, upper_arr, evaluate, params, seeds=[np.array(seed_genes, dtype=np.int64)])
    if not run.cost < incumbent - RR_EPSILON:
        return None
    updated = []
    decoded = dict(zip((id(st) for st, *_ in layout), decode(run.genes)))
    for st in states:
        if id(st) not in decoded:
            updated.append(st)
            continue
        new, slots = decoded[id(st)]
        paths = list(st.paths)
        hosts = {v: set(n) for v, n in st.hosts.items()}
        if new is not None:
            paths.append(new[0])
            for v, n in new[1].items():
                hosts[v].add(n)
        updated.append(_ChainState(st.chain, paths, hosts, [int(k) for k in slots]))
    return updated, run.cost, run.trace


def run_rr_ga(
    net: Network,
    cost_set: CostFunctionSet,
    chains: Sequence[ServiceChain],
    ra_result: RaGaResult,
    bg_loads: np.ndarray,
    params: GaParams = GaParams(),
    rng: np.random.Generator | None = None,
) -> RaGaResult:
    """Add replica sets one at a time while each one strictly lowers the cost."""
    start = time.perf_counter()
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    by_id = {s.id: s for s in chains}
    states = [_ChainState(by_id[st.chain.id], list(st.paths), {v: set(n) for v, n in st.hosts.items()}, list(st.assign))
              for st in ra_result.states]
    cost = ra_result.cost
    trace = []
    rounds = max((s.r_max for s in chains), default=0)
    for r in range(1, rounds + 1):
        step = _replica_round(net, cost_set, states, np.asarray(bg_loads, dtype=float), params, rng, cost)
        if step is None:
            break
        states, cost, round_trace = step
        trace += [(r, g, b, m) for g, b, m in round_trace]
    return RaGaResult(
        _state_to_solution(states),
        cost,
        {st.chain.id: len(st.paths) - 1 for st in states},
        trace,
        time.perf_counter() - start,
        states,
    )


def run_ga_pipeline(
    net: Network,
    cost_set: CostFunctionSet,
    chains: Sequence[ServiceChain],
    bg_loads: np.ndarray,
    params: GaParams = GaParams(),
) -> RaGaResult:
    """RA-GA followed by RR-GA, sharing one random stream seeded from ``params``."""
    rng = np.random.default_rng(params.seed)
    ra = run_ra_ga(net, cost_set, chains, bg_loads, params, rng)
    if not any(s.r_max > 0 for s in chains):
        return ra
    rr = run_rr_ga(net, cost_set, chains, ra, bg_loads, params, rng)
    rr.elapsed += ra.elapsed
    rr.trace = [(0, g, b, m) for g, b, m in ra.trace] + rr.trace
    return rr


def trace_to_csv(trace) -> str:
    lines = ["stage,generation,bestCost,meanCost"]
    for row in trace:
        stage, gen, best, mean = row if len(row) == 4 else (0,) + tuple(row)
        lines.append(f"{stage},{gen},{best!r},{mean!r}")
    return "\n".join(lines) + "\n"


@dataclass
class FullGaResult:
    te: TeGaResult
    ra: RaGaResult
    elapsed: float


def run_full_ga(
    net: Network,
    cost_set: CostFunctionSet,
    bg_demands: Sequence[Demand],
    chains: Sequence[ServiceChain],
    params: GaParams = GaParams(),
) -> FullGaResult:
    """TE-GA, then RA-GA and RR-GA on the background loads TE-GA produced."""
    start = time.perf_counter()
    rng = np.random.default_rng(params.seed)
    te = run_te_ga(net, cost_set, bg_demands, params, rng)
    ra = run_ra_ga(net, cost_set, chains, te.loads, params, rng)
    if any(s.r_max > 0 for s in chains):
        rr = run_rr_ga(net, cost_set, chains, ra, te.loads, params, rng)
        rr.elapsed += ra.elapsed
        rr.trace = [(0, g, b, m) for g, b, m in ra.trace] + rr.trace
        ra = rr
    return FullGaResult(te, ra, time.perf_counter() - start)
