"""Exact TE and RA solvers by branch-and-bound over the candidate path catalog.

Both searches price link loads directly with the piecewise-linear cost, which
equals the smallest feasible K per link. Pruning relies on two facts about
that cost: it is non-decreasing, and it is convex, so the extra cost of adding
load to a link never shrinks as the link's existing load grows. The second
fact lets the RA search bound the cost of all chains still to be placed by the
sum of their cheapest increments over the background alone.
"""

from __future__ import annotations

import itertools
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .costmodel import CostFunctionSet
from .solution import RaSolution, TeSolution, path_load
from .topology import Network, Path
from .traffic import Demand, ServiceChain

_TOL = 1e-12
_CHUNK = 16384


class InfeasibleError(RuntimeError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class SearchBudget:
    max_nodes: int = 50_000_000
    time_limit: float = 600.0
    optimality_required: bool = False

    def __post_init__(self):
        if self.max_nodes <= 0 or self.time_limit <= 0:
            raise ValueError("budget limits must be positive")


@dataclass
class ExactResult:
    solution: TeSolution | RaSolution
    cost: float
    proven_optimal: bool
    explored: int
    elapsed: float
    loads: np.ndarray | None = field(default=None, repr=False)


class _Clock:
    def __init__(self, budget: SearchBudget):
        self.budget = budget
        self.start = time.perf_counter()
        self.explored = 0
        self.exhausted = False

    def tick(self, n: int = 1) -> None:
        self.explored += n
        if self.explored > self.budget.max_nodes or time.perf_counter() - self.start > self.budget.time_limit:
            self.exhausted = True
            raise BudgetExceeded

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start


def _finish(clock: _Clock, solution, cost, loads) -> ExactResult:
    proven = not clock.exhausted
    if not proven and clock.budget.optimality_required:
        raise BudgetExceeded(f"search budget exhausted after {clock.explored} nodes")
    return ExactResult(solution, float(cost), proven, clock.explored, clock.elapsed, loads)


# --- TE ---------------------------------------------------------------------


def _te_candidates(net: Network, demands: Sequence[Demand]) -> list[tuple[Path, ...]]:
    out = []
    for d in demands:
        paths = net.paths(d.source, d.destination)
        if not paths:
            raise InfeasibleError(f"demand {d.id} ({d.source}->{d.destination}) has no candidate path")
        out.append(paths)
    return out


def _delta(cost_set: CostFunctionSet, loads: np.ndarray, caps: np.ndarray, links: np.ndarray, bw: float) -> float:
    before = loads[links] / caps[links]
    return float((cost_set.cost_array(before + bw / caps[links]) - cost_set.cost_array(before)).sum())


def te_local_search(
    net: Network,
    cost_set: CostFunctionSet,
    demands: Sequence[Demand],
    choice: list[int] | None = None,
    max_sweeps: int = 20,
) -> tuple[list[int], float]:
    """Greedy construction (largest demand first) followed by single-demand rerouting."""
    cands = _te_candidates(net, demands)
    caps = net.capacities()
    links = [[np.array(p.links, dtype=int) for p in ps] for ps in cands]
    loads = np.zeros(len(net.links))
    if choice is None:
        choice = [0] * len(demands)
        order = sorted(range(len(demands)), key=lambda i: (-demands[i].bandwidth, i))
        for i in order:
            bw = demands[i].bandwidth
            deltas = [_delta(cost_set, loads, caps, lk, bw) for lk in links[i]]
            j = int(np.argmin(deltas))
            choice[i] = j
            loads[links[i][j]] += bw
    else:
        choice = list(choice)
        for i, j in enumerate(choice):
            loads[links[i][j]] += demands[i].bandwidth
    for _ in range(max_sweeps):
        improved = False
        for i, d in enumerate(demands):
            if len(links[i]) == 1:
                continue
            loads[links[i][choice[i]]] -= d.bandwidth
            deltas = [_delta(cost_set, loads, caps, lk, d.bandwidth) for lk in links[i]]
            j = int(np.argmin(deltas))
            if deltas[j] < deltas[choice[i]] - 1e-12:
                choice[i] = j
                improved = True
            loads[links[i][choice[i]]] += d.bandwidth
        if not improved:
            break
    cost = float(cost_set.cost_array(loads / caps).sum())
    return choice, cost


def solve_te_exact(
    net: Network,
    cost_set: CostFunctionSet,
    demands: Sequence[Demand],
    budget: SearchBudget = SearchBudget(),
    prune_log: list | None = None,
) -> ExactResult:
    """Route every background demand on one candidate path with minimum total cost.

    Depth-first over demands in decreasing bandwidth; children ordered by
    incremental cost; a subtree is cut when the cost of the loads fixed so far
    reaches the incumbent.
    """
    clock = _Clock(budget)
    demands = list(demands)
    cands = _te_candidates(net, demands)
    caps = net.capacities()
    links = [[np.array(p.links, dtype=int) for p in ps] for ps in cands]

    best_choice, best_cost = te_local_search(net, cost_set, demands)
    order = sorted(range(len(demands)), key=lambda i: (-demands[i].bandwidth, i))
    loads = np.zeros(len(net.links))
    current = [0] * len(demands)

    def frame(depth: int, cost: float) -> list:
        i = order[depth]
        bw = demands[i].bandwidth
        deltas = [_delta(cost_set, loads, caps, lk, bw) for lk in links[i]]
        clock.tick(len(deltas))
        ranked = sorted(range(len(deltas)), key=lambda j: (deltas[j], j))
        # depth, demand, cost so far, deltas, ranked children, next child, applied child
        return [depth, i, cost, deltas, ranked, 0, None]

    try:
        stack = [frame(0, 0.0)] if order else []
        while stack:
            f = stack[-1]
            depth, i, cost, deltas, ranked, nxt, applied = f
            bw = demands[i].bandwidth
            if applied is not None:
                loads[links[i][applied]] -= bw
                f[6] = None
            if nxt >= len(ranked):
                stack.pop()
                continue
            j = ranked[nxt]
            f[5] = nxt + 1
            bound = cost + deltas[j]
            if bound >= best_cost - _TOL:
                if prune_log is not None:
                    prune_log.append(({order[t]: current[order[t]] for t in range(depth)}, i, j, bound))
                stack.pop()
                continue
            current[i] = j
            if depth + 1 == len(order):
                best_cost = bound
                best_choice = list(current)
                continue
            loads[links[i][j]] += bw
            f[6] = j
            stack.append(frame(depth + 1, bound))
    except BudgetExceeded:
        pass
    te = TeSolution({d.id: cands[i][best_choice[i]] for i, d in enumerate(demands)})
    final = np.zeros(len(net.links))
    for i, d in enumerate(demands):
        final[links[i][best_choice[i]]] += d.bandwidth
    return _finish(clock, te, best_cost, final)


# --- RA ---------------------------------------------------------------------


def chain_placements(
    chain: ServiceChain,
    anchor: str,
    paths: Sequence[Path],
    used: frozenset[str] | set[str] = frozenset(),
) -> Iterator[dict[int, frozenset[str]]]:
    """Yield every VNF placement that serves ``paths`` in order from ``anchor``.

    Replicable VNFs get one host per path, lying on no other selected path;
    non-replicable VNFs get one host shared by all paths. The egress node is
    the chain's gateway endpoint and never hosts a VNF. ``used`` nodes are
    taken by other chains.
    """
    if anchor in used or any(p.source != anchor for p in paths):
        return
    vnfs = chain.vnfs
    hosts: dict[int, frozenset[str]] = {0: frozenset((anchor,))}
    taken = set(used) | {anchor, chain.egress}
    members = [set(p.nodes) for p in paths]

    def place(v: int, pos: tuple[int, ...]) -> Iterator[dict[int, frozenset[str]]]:
        if v == len(vnfs):
            yield dict(hosts)
            return
        if vnfs[v].replicable:
            yield from per_path(v, 0, pos, ())
        else:
            first = paths[0]
            for q in range(pos[0] + 1, len(first.nodes)):
                n = first.nodes[q]
                if n in taken:
                    continue
                new = []
                for k, p in enumerate(paths):
                    if n not in members[k]:
                        break
                    qk = p.nodes.index(n)
                    if qk <= pos[k]:
                        break
                    new.append(qk)
                else:
                    taken.add(n)
                    hosts[v] = frozenset((n,))
                    yield from place(v + 1, tuple(new))
                    taken.discard(n)
                    del hosts[v]

    def per_path(v: int, k: int, pos: tuple[int, ...], chosen: tuple[str, ...]):
        if k == len(paths):
            hosts[v] = frozenset(chosen)
            new = tuple(paths[i].nodes.index(n) for i, n in enumerate(chosen))
            yield from place(v + 1, new)
            del hosts[v]
            return
        p = paths[k]
        for q in range(pos[k] + 1, len(p.nodes)):
            n = p.nodes[q]
            if n in taken or any(n in members[o] for o in range(len(paths)) if o != k):
                continue
            taken.add(n)
            yield from per_path(v, k + 1, pos, chosen + (n,))
            taken.discard(n)

    yield from place(1, (0,) * len(paths))


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


@dataclass
class _ChainOptions:
    chain: ServiceChain
    structs: list[tuple[str, tuple[Path, ...]]]
    groups: list[tuple[float, list[str]]]  # bandwidth -> demand ids (chain order)
    struct_of: np.ndarray  # option -> struct index
    split_of: list[tuple[tuple[int, ...], ...]]  # option -> per-group counts per path
    loads: np.ndarray  # option x link


def _chain_options(net: Network, chain: ServiceChain, max_paths: int | None = None) -> _ChainOptions:
    by_bw: dict[float, list[str]] = defaultdict(list)
    for d in chain.demands:
        by_bw[d.bandwidth].append(d.id)
    groups = sorted(by_bw.items())
    n_dem = len(chain.demands)
    limit = chain.r_max + 1 if max_paths is None else min(chain.r_max + 1, max_paths)
    if n_dem == 0:
        limit = 1

    structs = []
    struct_of: list[int] = []
    split_of: list[tuple] = []
    rows: list[np.ndarray] = []
    split_cache: dict[int, list[tuple[tuple[int, ...], ...]]] = {}
    for anchor in net.nodes:
        if anchor == chain.egress:
            continue
        cands = net.paths(anchor, chain.egress)
        for size in range(1, min(limit, len(cands)) + 1):
            if size > max(n_dem, 1):
                break
            if size not in split_cache:
                per_group = [_compositions(len(ids), size) for _, ids in groups]
                splits = []
                for combo in itertools.product(*per_group):
                    per_path = [sum(c[k] for c in combo) for k in range(size)]
                    if n_dem and min(per_path) == 0:
                        continue
                    splits.append(combo)
                split_cache[size] = splits
            splits = split_cache[size]
            if not splits:
                continue
            bw_mat = np.array(
                [[sum(bw * c[k] for (bw, _), c in zip(groups, combo)) for k in range(size)] for combo in splits]
            ).reshape(len(splits), size)
            for subset in itertools.combinations(range(len(cands)), size):
                paths = tuple(cands[j] for j in subset)
                if next(chain_placements(chain, anchor, paths), None) is None:
                    continue
                inc = np.zeros((size, len(net.links)))
                for k, p in enumerate(paths):
                    inc[k, list(p.links)] = 1.0
                rows.append(bw_mat @ inc)
                struct_of.extend([len(structs)] * len(splits))
                split_of.extend(splits)
                structs.append((anchor, paths))
    loads = np.vstack(rows) if rows else np.zeros((0, len(net.links)))
    return _ChainOptions(chain, structs, groups, np.array(struct_of, dtype=int), split_of, loads)


def _costs(cost_set: CostFunctionSet, base: np.ndarray, add: np.ndarray, caps: np.ndarray) -> np.ndarray:
    out = np.empty(len(add))
    for lo in range(0, len(add), _CHUNK):
        block = (base + add[lo : lo + _CHUNK]) / caps
        out[lo : lo + _CHUNK] = cost_set.cost_array(block).sum(axis=1)
    return out


def _joint_placement(
    picks: Sequence[tuple[ServiceChain, str, tuple[Path, ...]]],
) -> list[dict[int, frozenset[str]]] | None:
    out: list[dict[int, frozenset[str]]] = []

    def rec(i: int, used: frozenset[str]) -> bool:
        if i == len(picks):
            return True
        chain, anchor, paths = picks[i]
        for pl in chain_placements(chain, anchor, paths, used):
            out.append(pl)
            if rec(i + 1, used.union(*pl.values())):
                return True
            out.pop()
        return False

    return out if rec(0, frozenset()) else None


def _assemble(opts: Sequence[_ChainOptions], picks: Sequence[int], placements) -> RaSolution:
    chain_paths, demand_paths, pl_out = {}, {}, {}
    for co, o, pl in zip(opts, picks, placements):
        cid = co.chain.id
        anchor, paths = co.structs[co.struct_of[o]]
        chain_paths[cid] = paths
        for (bw, ids), counts in zip(co.groups, co.split_of[o]):
            it = iter(ids)
            for k, c in enumerate(counts):
                for _ in range(c):
                    demand_paths[(cid, next(it))] = paths[k]
        for v, nodes in pl.items():
            pl_out[(cid, v)] = nodes
    return RaSolution(chain_paths, demand_paths, pl_out)


def solve_ra_exact(
    net: Network,
    cost_set: CostFunctionSet,
    chains: Sequence[ServiceChain],
    bg_loads: np.ndarray | None = None,
    budget: SearchBudget = SearchBudget(),
    warm_start: RaSolution | None = None,
    prune_log: list | None = None,
) -> ExactResult:
    """Jointly choose anchors, path sets, VNF hosts and demand splits for all chains.

    Only selections in which every chosen path carries at least one demand
    are searched; dropping an idle path never raises cost and never breaks a
    constraint, so the optimum is unaffected.
    """
    clock = _Clock(budget)
    chains = sorted(chains, key=lambda s: s.id)
    caps = net.capacities()
    base = np.zeros(len(net.links)) if bg_loads is None else np.asarray(bg_loads, dtype=float)
    base_cost = float(cost_set.cost_array(base / caps).sum())
    if not chains:
        return _finish(clock, RaSolution({}, {}, {}), base_cost, base.copy())

    opts = []
    for s in chains:
        co = _chain_options(net, s)
        if len(co.loads) == 0:
            raise InfeasibleError(f"chain {s.id}: no placement satisfies the routing and placement constraints")
        opts.append(co)
    incs = [_costs(cost_set, base, co.loads, caps) - base_cost for co in opts]
    clock.explored += sum(len(co.loads) for co in opts)
    min_inc = [float(max(inc.min(), 0.0)) for inc in incs]
    rest = [sum(min_inc[i:]) for i in range(len(opts) + 1)]

    best_cost = np.inf
    best: tuple[list[int], list] | None = None
    feasible_cache: dict[tuple, list | None] = {}

    def joint(picks: tuple[int, ...]):
        key = tuple(int(co.struct_of[o]) for co, o in zip(opts, picks))
        if key not in feasible_cache:
            feasible_cache[key] = _joint_placement(
                [(co.chain,) + co.structs[k] for co, k in zip(opts, key)]
            )
        return feasible_cache[key]

    warm = warm_start
    if warm is not None:
        warm_loads = base + path_load(
            net, ((warm.demand_paths[(s.id, d.id)], d.bandwidth) for s in chains for d in s.demands)
        )
        best_cost = float(cost_set.cost_array(warm_loads / caps).sum())

    # greedy dive for an early incumbent
    picks: list[int] = []
    loads = base.copy()
    for co in opts:
        costs = _costs(cost_set, loads, co.loads, caps)
        for o in np.argsort(costs, kind="stable"):
            if joint(tuple(picks) + (int(o),)) is not None:
                picks.append(int(o))
                loads = loads + co.loads[o]
                break
        else:
            break
    if len(picks) == len(opts):
        cost = float(cost_set.cost_array(loads / caps).sum())
        if cost < best_cost - _TOL:
            best_cost, best = cost, (picks, joint(tuple(picks)))

    chosen: list[int] = []

    # an option adds at least as much cost on top of heavier loads as on the
    # background alone (convex links), so options whose background increment
    # already closes the gap to the incumbent are never priced
    inc_order = [np.argsort(inc, kind="stable") for inc in incs]
    inc_sorted = [inc[order] for inc, order in zip(incs, inc_order)]

    def dfs(depth: int, loads: np.ndarray, cost_so_far: float) -> None:
        nonlocal best_cost, best
        co = opts[depth]
        gap = best_cost - _TOL - cost_so_far - rest[depth + 1]
        cand = np.sort(inc_order[depth][: np.searchsorted(inc_sorted[depth], gap, side="left")])
        if not len(cand):
            return
        costs = _costs(cost_set, loads, co.loads[cand], caps)
        clock.tick(len(costs))
        last = depth == len(opts) - 1
        for c in np.argsort(costs, kind="stable"):
            o = cand[c]
            bound = costs[c] + rest[depth + 1]
            if bound >= best_cost - _TOL:
                if prune_log is not None:
                    prune_log.append((tuple(chosen), depth, int(o), float(bound)))
                break
            placement = joint(tuple(chosen) + (int(o),))
            if placement is None:
                continue
            if last:
                best_cost = float(costs[c])
                best = (chosen + [int(o)], placement)
                break
            chosen.append(int(o))
            dfs(depth + 1, loads + co.loads[o], float(costs[c]))
            chosen.pop()

    try:
        dfs(0, base, base_cost)
    except BudgetExceeded:
        pass

    if best is None:
        if warm is not None:
            return _finish(clock, warm, best_cost, warm_loads)
        if clock.exhausted:
            raise BudgetExceeded("search budget exhausted before any feasible placement was found")
        raise InfeasibleError(
            f"no joint placement satisfies node capacity; first chain: {chains[0].id}"
        )
    picks, placement = best
    ra = _assemble(opts, picks, placement)
    total = base + sum(co.loads[o] for co, o in zip(opts, picks))
    return _finish(clock, ra, best_cost, total)
