"""Random-fit baseline: random VNF hosts first, then random admissible paths.

Per chain the sampler draws an anchor and hosts for every VNF uniformly at
random, keeps the candidate paths that visit exactly one host of each VNF in
chain order, picks up to ``r_max + 1`` mutually compatible ones at random and
routes every demand over one of them chosen uniformly. A draw that leaves no
admissible path is rejected and redrawn.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costmodel import CostFunctionSet
from .exact import InfeasibleError
from .solution import RaSolution, path_load
from .topology import Network, Path
from .traffic import ServiceChain

MAX_RETRIES = 10_000


@dataclass
class RfpaResult:
    solution: RaSolution
    cost: float
    replica_counts: dict[str, int]
    elapsed: float
    attempts: dict[str, int]


def _admissible(chain: ServiceChain, anchor: str, hosts: dict[int, list[str]], paths: Sequence[Path]) -> list[tuple[Path, dict[int, str]]]:
    """Paths from ``anchor`` meeting exactly one host of every VNF, in order."""
    out = []
    for p in paths:
        if p.source != anchor:
            continue
        picked: dict[int, str] = {0: anchor}
        prev = 0
        for v in chain.vnfs[1:]:
            on = [n for n in hosts[v.index] if n in p]
            if len(on) != 1 or p.position(on[0]) <= prev:
                break
            picked[v.index] = on[0]
            prev = p.position(on[0])
        else:
            out.append((p, picked))
    return out


def _sample_chain(
    net: Network,
    chain: ServiceChain,
    r_max: int,
    used: set[str],
    rng: np.random.Generator,
    max_retries: int,
):
    free = [n for n in net.nodes if n not in used and n != chain.egress]
    for attempt in range(1, max_retries + 1):
        if not free:
            break
        anchor = free[int(rng.integers(len(free)))]
        pool = [n for n in free if n != anchor]
        hosts: dict[int, list[str]] = {}
        ok = True
        for v in chain.vnfs[1:]:
            want = r_max + 1 if v.replicable else 1
            if not pool:
                ok = False
                break
            order = rng.permutation(len(pool))[: min(want, len(pool))]
            hosts[v.index] = [pool[i] for i in order]
            taken = set(hosts[v.index])
            pool = [n for n in pool if n not in taken]
        if not ok:
            continue
        cands = _admissible(chain, anchor, hosts, net.paths(anchor, chain.egress))
        if not cands:
            continue
        chosen: list[tuple[Path, dict[int, str]]] = []
        claimed: set[str] = set()
        for i in rng.permutation(len(cands)):
            p, picked = cands[int(i)]
            mine = {picked[v.index] for v in chain.vnfs[1:] if v.replicable}
            # replicable hosts may each lie on one selected path only
            if any(n in p for n in claimed) or any(n in q for q, _ in chosen for n in mine):
                continue
            chosen.append((p, picked))
            claimed |= mine
            if len(chosen) == r_max + 1:
                break
        return anchor, chosen, attempt
    raise InfeasibleError(
        f"chain {chain.id}: no admissible random placement after {max_retries} attempts"
        f" ({len(free)} candidate nodes, egress {chain.egress})"
    )


def run_rfpa(
    net: Network,
    cost_set: CostFunctionSet,
    chains: Sequence[ServiceChain],
    bg_loads: np.ndarray,
    r_max: int | None = None,
    seed: int = 0,
    max_retries: int = MAX_RETRIES,
) -> RfpaResult:
    """Random-fit placement. ``r_max`` can only tighten the chains' own limits."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    chain_paths, demand_paths, placements = {}, {}, {}
    used: set[str] = set()
    attempts = {}
    for s in sorted(chains, key=lambda c: c.id):
        limit = s.r_max if r_max is None else min(r_max, s.r_max)
        anchor, chosen, attempts[s.id] = _sample_chain(net, s, limit, used, rng, max_retries)
        paths = tuple(p for p, _ in chosen)
        chain_paths[s.id] = paths
        for v in s.vnfs:
            placements[(s.id, v.index)] = frozenset(picked[v.index] for _, picked in chosen)
        used |= {n for v in s.vnfs for n in placements[(s.id, v.index)]}
        picks = rng.integers(len(paths), size=len(s.demands))
        for d, k in zip(s.demands, picks):
            demand_paths[(s.id, d.id)] = paths[int(k)]
    sol = RaSolution(chain_paths, demand_paths, placements)
    loads = np.asarray(bg_loads, dtype=float) + path_load(
        net, ((demand_paths[(s.id, d.id)], d.bandwidth) for s in chains for d in s.demands)
    )
    cost = float(cost_set.cost_array(loads / net.capacities()).sum())
    return RfpaResult(sol, cost, sol.replica_counts(), time.perf_counter() - start, attempts)
