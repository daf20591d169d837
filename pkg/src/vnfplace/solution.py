"""Routing/placement decisions, load accounting and constraint validation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .costmodel import CostFunctionSet
from .topology import Network, Path
from .traffic import Demand, ServiceChain


class SolutionError(ValueError):
    pass


@dataclass(frozen=True)
class TeSolution:
    """Background routing: demand id -> path."""

    assignment: Mapping[str, Path]


@dataclass(frozen=True)
class RaSolution:
    """Chain routing and VNF placement.

    chain_paths: chain id -> selected paths
    demand_paths: (chain id, demand id) -> path
    placements: (chain id, vnf index) -> hosting nodes
    """

    chain_paths: Mapping[str, tuple[Path, ...]]
    demand_paths: Mapping[tuple[str, str], Path]
    placements: Mapping[tuple[str, int], frozenset[str]]

    def replica_counts(self) -> dict[str, int]:
        return {c: len(paths) - 1 for c, paths in self.chain_paths.items()}

    def hosts(self, chain_id: str, vnf: int) -> frozenset[str]:
        return self.placements.get((chain_id, vnf), frozenset())

    def used_nodes(self) -> set[str]:
        return {n for hosts in self.placements.values() for n in hosts}


@dataclass
class LoadLedger:
    background: np.ndarray
    chain: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.background + self.chain

    def utilization(self, net: Network) -> np.ndarray:
        return self.total / net.capacities()


def path_load(net: Network, paths_and_bw: Iterable[tuple[Path, float]]) -> np.ndarray:
    loads = np.zeros(len(net.links))
    for path, bw in paths_and_bw:
        loads[list(path.links)] += bw
    return loads


def accumulate_loads(
    net: Network,
    te: TeSolution | None,
    ra: RaSolution | None,
    bg_demands: Sequence[Demand] = (),
    chains: Sequence[ServiceChain] = (),
) -> LoadLedger:
    bg = np.zeros(len(net.links))
    if bg_demands:
        if te is None:
            raise SolutionError("background demands given without a TE solution")
        for d in bg_demands:
            if d.id not in te.assignment:
                raise SolutionError(f"background demand {d.id} has no path")
            bg[list(te.assignment[d.id].links)] += d.bandwidth
    ch = np.zeros(len(net.links))
    if chains and ra is not None:
        for s in chains:
            for d in s.demands:
                path = ra.demand_paths.get((s.id, d.id))
                if path is None:
                    raise SolutionError(f"chain demand {s.id}/{d.id} has no path")
                ch[list(path.links)] += d.bandwidth
    elif any(s.demands for s in chains):
        raise SolutionError("chain demands given without an RA solution")
    return LoadLedger(bg, ch)


def objective(
    net: Network,
    cost_set: CostFunctionSet,
    te: TeSolution | None,
    ra: RaSolution | None,
    bg_demands: Sequence[Demand] = (),
    chains: Sequence[ServiceChain] = (),
) -> float:
    ledger = accumulate_loads(net, te, ra, bg_demands, chains)
    return float(cost_set.cost_array(ledger.total / net.capacities()).sum())


# --- validation -------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    equation: str  # "Eq3".."Eq10", "egress", "capacity" or "structure"
    message: str
    entities: tuple = ()


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def equations(self) -> set[str]:
        return {v.equation for v in self.violations}

    def add(self, equation: str, message: str, *entities) -> None:
        self.violations.append(Violation(equation, message, tuple(entities)))

    def __str__(self) -> str:
        if self.ok:
            return "no violations"
        return "\n".join(f"[{v.equation}] {v.message}" for v in self.violations)


def _path_is_consistent(net: Network, path: Path) -> bool:
    if len(path.nodes) < 2 or len(path.links) != len(path.nodes) - 1:
        return False
    if len(set(path.nodes)) != len(path.nodes):
        return False
    try:
        return all(net.link_index(u, v) == li for (u, v), li in zip(zip(path.nodes, path.nodes[1:]), path.links))
    except ValueError:
        return False


def validate(
    net: Network,
    chains: Sequence[ServiceChain] = (),
    te: TeSolution | None = None,
    ra: RaSolution | None = None,
    bg_demands: Sequence[Demand] = (),
    enforce_capacity: bool = True,
) -> ValidationReport:
    """Check every routing/placement constraint. Violations are returned, not raised."""
    report = ValidationReport()
    known_nodes = set(net.nodes)

    for d in bg_demands:
        path = te.assignment.get(d.id) if te is not None else None
        if path is None:
            report.add("Eq3", f"background demand {d.id} is not routed", d.id)
            continue
        if not _path_is_consistent(net, path):
            report.add("structure", f"path {path.nodes} of {d.id} is not a path of the network", d.id)
        if (path.source, path.target) != (d.source, d.destination):
            report.add("Eq3", f"path {path.nodes} does not connect {d.source} to {d.destination}", d.id)

    if ra is not None:
        chain_ids = {s.id for s in chains}
        for (cid, v) in ra.placements:
            if cid not in chain_ids:
                report.add("structure", f"placement for unknown chain {cid}", cid)
        for cid in ra.chain_paths:
            if cid not in chain_ids:
                report.add("structure", f"paths selected for unknown chain {cid}", cid)
        for s in chains:
            _validate_chain(net, s, ra, report, known_nodes)
        counts = Counter(n for hosts in ra.placements.values() for n in hosts)
        for n, c in sorted(counts.items()):
            if c > 1:
                owners = sorted(k for k, hosts in ra.placements.items() if n in hosts)
                report.add("Eq9", f"node {n} hosts {c} VNF instances {owners}", n)
    elif any(s.demands for s in chains):
        for s in chains:
            for d in s.demands:
                report.add("Eq3", f"chain demand {s.id}/{d.id} is not routed", s.id, d.id)

    if enforce_capacity:
        try:
            ledger = accumulate_loads(net, te, ra, bg_demands, chains if ra is not None else ())
        except SolutionError:
            ledger = None
        if ledger is not None:
            caps = net.capacities()
            for i in np.flatnonzero(ledger.total > caps * (1 + 1e-9)):
                link = net.links[i]
                report.add("capacity", f"link {link.id} carries {ledger.total[i]:.1f} > {link.capacity:.1f} Mbps", link.id)
    return report


def _validate_chain(net: Network, s: ServiceChain, ra: RaSolution, report: ValidationReport, known_nodes) -> None:
    paths = tuple(ra.chain_paths.get(s.id, ()))
    hosts = {v.index: ra.hosts(s.id, v.index) for v in s.vnfs}
    for (cid, vi), nodes in ra.placements.items():
        if cid == s.id:
            if vi not in hosts:
                report.add("structure", f"chain {s.id} has no VNF {vi}", s.id, vi)
            unknown = set(nodes) - known_nodes
            if unknown:
                report.add("structure", f"chain {s.id} VNF {vi} placed on unknown nodes {sorted(unknown)}", s.id, vi)

    for v in s.vnfs:
        if s.egress in hosts[v.index]:
            report.add("egress", f"chain {s.id}: VNF {v.index} is hosted on the egress node {s.egress}", s.id, v.index)

    for p in paths:
        if not _path_is_consistent(net, p):
            report.add("structure", f"chain {s.id}: {p.nodes} is not a path of the network", s.id)
    if len(set(paths)) != len(paths):
        report.add("structure", f"chain {s.id} selects the same path twice", s.id)

    if not 1 <= len(paths) <= s.r_max + 1:
        report.add("Eq5", f"chain {s.id} selects {len(paths)} paths; allowed 1..{s.r_max + 1}", s.id)

    for v in s.vnfs:
        limit = 1 + s.r_max * int(v.replicable)
        if len(hosts[v.index]) > limit:
            report.add("Eq10", f"chain {s.id} VNF {v.index} has {len(hosts[v.index])} instances; limit {limit}", s.id, v.index)

    for p in paths:
        for v in s.vnfs:
            if not any(n in p for n in hosts[v.index]):
                report.add("Eq6", f"chain {s.id}: path {p.nodes} has no instance of VNF {v.index}", s.id, v.index, p.nodes)

    for v in s.vnfs:
        if not v.replicable:
            continue
        for n in sorted(hosts[v.index]):
            on = [p for p in paths if n in p]
            if len(on) > 1:
                report.add("Eq7", f"chain {s.id}: VNF {v.index} host {n} lies on {len(on)} selected paths", s.id, v.index, n)

    for p in paths:
        for v in s.vnfs[1:]:
            for i, n in enumerate(p.nodes):
                if n in hosts[v.index] and not any(m in hosts[v.index - 1] for m in p.nodes[:i]):
                    report.add(
                        "Eq8",
                        f"chain {s.id}: on path {p.nodes}, VNF {v.index} at {n} has no VNF {v.index - 1} before it",
                        s.id, v.index, n,
                    )

    for d in s.demands:
        path = ra.demand_paths.get((s.id, d.id))
        if path is None:
            report.add("Eq3", f"chain demand {s.id}/{d.id} is not routed", s.id, d.id)
            continue
        if path.source not in hosts[0] or path.target != s.egress:
            report.add(
                "Eq3",
                f"chain demand {s.id}/{d.id} path {path.nodes} does not run from the anchor to {s.egress}",
                s.id, d.id,
            )
        if path not in paths:
            report.add("Eq4", f"chain demand {s.id}/{d.id} uses a path the chain did not select", s.id, d.id)


# --- serialization ----------------------------------------------------------


def solution_to_json(
    net: Network,
    te: TeSolution | None,
    ra: RaSolution | None,
    cost: float | None = None,
    ledger: LoadLedger | None = None,
) -> dict:
    doc: dict = {
        "teAssignment": [
            {"demandId": did, "pathNodes": list(p.nodes)} for did, p in sorted((te.assignment if te else {}).items())
        ],
        "chains": [],
    }
    if ra is not None:
        for cid in sorted(ra.chain_paths):
            doc["chains"].append(
                {
                    "chainId": cid,
                    "selectedPaths": [list(p.nodes) for p in ra.chain_paths[cid]],
                    "placements": [
                        {"vnf": v, "nodes": sorted(nodes)}
                        for (c, v), nodes in sorted(ra.placements.items())
                        if c == cid
                    ],
                    "demandPaths": [
                        {"demandId": did, "pathNodes": list(p.nodes)}
                        for (c, did), p in sorted(ra.demand_paths.items())
                        if c == cid
                    ],
                }
            )
    doc["cost"] = cost
    if ledger is not None:
        util = ledger.utilization(net)
        doc["perLinkUtilization"] = {link.id: float(u) for link, u in zip(net.links, util)}
    return doc


def solution_from_json(net: Network, doc: dict) -> tuple[TeSolution, RaSolution | None]:
    te = TeSolution({r["demandId"]: net.make_path(r["pathNodes"]) for r in doc.get("teAssignment", [])})
    if not doc.get("chains"):
        return te, None
    chain_paths, demand_paths, placements = {}, {}, {}
    for c in doc["chains"]:
        cid = c["chainId"]
        chain_paths[cid] = tuple(net.make_path(p) for p in c["selectedPaths"])
        for pl in c["placements"]:
            placements[(cid, int(pl["vnf"]))] = frozenset(pl["nodes"])
        for r in c["demandPaths"]:
            demand_paths[(cid, r["demandId"])] = net.make_path(r["pathNodes"])
    return te, RaSolution(chain_paths, demand_paths, placements)
