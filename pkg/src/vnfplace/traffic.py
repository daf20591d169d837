"""Background demands, service chains and the evaluation traffic profiles."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, replace

import numpy as np

from .topology import Network


class TrafficError(ValueError):
    pass


@dataclass(frozen=True)
class Demand:
    id: str
    source: str
    destination: str
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise TrafficError(f"demand {self.id}: bandwidth must be positive")
        if self.source == self.destination:
            raise TrafficError(f"demand {self.id}: source equals destination")


@dataclass(frozen=True)
class ChainDemand:
    """Chain traffic template; it originates wherever the anchor VNF is placed."""

    id: str
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise TrafficError(f"demand {self.id}: bandwidth must be positive")


@dataclass(frozen=True)
class VNF:
    index: int
    replicable: bool


@dataclass(frozen=True)
class ServiceChain:
    id: str
    vnfs: tuple[VNF, ...]
    egress: str
    demands: tuple[ChainDemand, ...]
    r_max: int = 0

    def __post_init__(self):
        object.__setattr__(self, "vnfs", tuple(self.vnfs))
        object.__setattr__(self, "demands", tuple(self.demands))
        if not self.vnfs:
            raise TrafficError(f"chain {self.id}: no VNFs")
        if self.vnfs[0].replicable:
            raise TrafficError(f"chain {self.id}: the first VNF must be non-replicable")
        if [v.index for v in self.vnfs] != list(range(len(self.vnfs))):
            raise TrafficError(f"chain {self.id}: VNF indices must be 0..n-1 in order")
        if self.r_max < 0:
            raise TrafficError(f"chain {self.id}: r_max must be non-negative")
        if len({d.id for d in self.demands}) != len(self.demands):
            raise TrafficError(f"chain {self.id}: duplicate demand ids")

    def with_r_max(self, r_max: int) -> "ServiceChain":
        return replace(self, r_max=r_max)

    @property
    def total_bandwidth(self) -> float:
        return sum(d.bandwidth for d in self.demands)


@dataclass(frozen=True)
class TrafficProfile:
    """Traffic parameters for one topology.

    ``background`` selects how background demands are drawn: ``"all-pairs"``
    creates one demand per unordered node pair, ``"random"`` draws
    ``connections`` distinct ordered pairs.
    """

    connections: int
    bg_bandwidth: float
    dc_bandwidth: float
    demands_per_chain: int
    seed: int = 0
    background: str = "all-pairs"

    def __post_init__(self):
        if self.connections < 0 or self.demands_per_chain < 0:
            raise TrafficError("counts must be non-negative")
        if not (self.bg_bandwidth > 0 and self.dc_bandwidth > 0):
            raise TrafficError("bandwidths must be positive")
        if self.background not in ("all-pairs", "random"):
            raise TrafficError(f"unknown background mode {self.background!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# Evaluation parameters per topology: (connections, DC-bw, BG-bw upper bound).
TABLE_II = {
    "nobel-us": (30, 35.0, 160.0),
    "janos-us": (30, 45.0, 50.0),
    "janos-us-ca": (25, 50.0, 30.0),
    "germany50": (25, 35.0, 35.0),
    "ta2": (20, 45.0, 20.0),
}
LINK_CAPACITY = 2500.0
CHAIN_COUNT = 2


def table_profile(topology: str, seed: int = 0) -> TrafficProfile:
    conn, dc_bw, bg_bw = TABLE_II[topology]
    return TrafficProfile(
        connections=conn,
        bg_bandwidth=bg_bw,
        dc_bandwidth=dc_bw,
        demands_per_chain=conn,
        seed=seed,
        background="all-pairs",
    )


def _uniform_half_open(rng: np.random.Generator, upper: float, size: int) -> np.ndarray:
    # uniform on (0, upper]
    return upper - rng.uniform(0.0, upper, size)


def generate_background_traffic(net: Network, profile: TrafficProfile, seed: int | None = None) -> list[Demand]:
    if len(net.nodes) < 2:
        raise TrafficError("need at least two nodes")
    rng = np.random.default_rng(profile.seed if seed is None else seed)
    if profile.background == "all-pairs":
        pairs = list(itertools.combinations(net.nodes, 2))
    else:
        ordered = list(itertools.permutations(net.nodes, 2))
        if profile.connections > len(ordered):
            raise TrafficError(
                f"{profile.connections} connections requested but only {len(ordered)} node pairs exist"
            )
        picks = rng.choice(len(ordered), size=profile.connections, replace=False)
        pairs = [ordered[i] for i in picks]
    bws = _uniform_half_open(rng, profile.bg_bandwidth, len(pairs))
    return [
        Demand(f"bg{i}", s, t, float(bw)) for i, ((s, t), bw) in enumerate(zip(pairs, bws))
    ]


def build_service_chains(
    net: Network,
    chain_count: int,
    vnfs_per_chain: int,
    profile: TrafficProfile,
    seed: int | None = None,
    r_max: int = 0,
) -> list[ServiceChain]:
    """Chains with a random distinct egress node each; VNF 0 is the anchor."""
    if chain_count < 1 or vnfs_per_chain < 1:
        raise TrafficError("chain_count and vnfs_per_chain must be positive")
    if chain_count > len(net.nodes):
        raise TrafficError(f"{chain_count} chains need distinct egress nodes; network has {len(net.nodes)}")
    # separate stream from background sampling so the two stay independent
    rng = np.random.default_rng([profile.seed if seed is None else seed, 1])
    egresses = rng.choice(len(net.nodes), size=chain_count, replace=False)
    vnfs = tuple(VNF(i, i > 0) for i in range(vnfs_per_chain))
    chains = []
    for c, e in enumerate(egresses):
        demands = tuple(
            ChainDemand(f"s{c}d{j}", profile.dc_bandwidth) for j in range(profile.demands_per_chain)
        )
        chains.append(ServiceChain(f"s{c}", vnfs, net.nodes[int(e)], demands, r_max))
    return chains


def demands_to_json(demands: list[Demand]) -> list[dict]:
    return [asdict(d) for d in demands]


def demands_from_json(rows: list[dict]) -> list[Demand]:
    return [Demand(r["id"], r["source"], r["destination"], float(r["bandwidth"])) for r in rows]


def chains_to_json(chains: list[ServiceChain]) -> list[dict]:
    return [
        {
            "id": c.id,
            "egress": c.egress,
            "rMax": c.r_max,
            "vnfs": [{"index": v.index, "replicable": v.replicable} for v in c.vnfs],
            "demands": [{"id": d.id, "bandwidth": d.bandwidth} for d in c.demands],
        }
        for c in chains
    ]


def chains_from_json(rows: list[dict]) -> list[ServiceChain]:
    return [
        ServiceChain(
            r["id"],
            tuple(VNF(int(v["index"]), bool(v["replicable"])) for v in r["vnfs"]),
            r["egress"],
            tuple(ChainDemand(d["id"], float(d["bandwidth"])) for d in r["demands"]),
            int(r.get("rMax", 0)),
        )
        for r in rows
    ]
