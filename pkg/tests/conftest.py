import itertools

import numpy as np
import pytest

from vnfplace.costmodel import default_cost_set
from vnfplace.topology import Link, Network, build_path_catalog
from vnfplace.traffic import VNF, ChainDemand, Demand, ServiceChain


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """report(n, ok, detail): record one pass/fail line for acceptance criterion n."""

    def report(n, ok, detail=""):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[ACCEPTANCE].append(line)
        return ok

    return report


def make_net(edges, capacity=100.0, name="") -> Network:
    nodes = sorted({n for e in edges for n in e[:2]})
    links = []
    for e in edges:
        cap = e[2] if len(e) > 2 else capacity
        links.append(Link(f"{e[0]}_{e[1]}", e[0], e[1], float(cap)))
    return Network(tuple(nodes), tuple(links), name=name)


def with_all_paths(net: Network, k=5) -> Network:
    pairs = [(a, b) for a, b in itertools.permutations(net.nodes, 2)]
    out, _ = build_path_catalog(net, pairs, k=k)
    return out


def make_chain(cid, egress, bws, r_max=0, n_vnfs=2) -> ServiceChain:
    vnfs = tuple(VNF(i, i > 0) for i in range(n_vnfs))
    demands = tuple(ChainDemand(f"{cid}d{j}", float(bw)) for j, bw in enumerate(bws))
    return ServiceChain(cid, vnfs, egress, demands, r_max)


@pytest.fixture
def cost_set():
    return default_cost_set()


@pytest.fixture
def diamond():
    """Two disjoint two-hop routes A-B-D and A-C-D, 100 Mbps links."""
    return with_all_paths(make_net([("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")]))


@pytest.fixture
def diamond_chain():
    # 80 Mbps on one route puts both of its links at 80% utilization
    return make_chain("s0", "D", [40, 40])


@pytest.fixture
def bottleneck():
    """Two parallel routes s-a-t and s-b-t; two 60 Mbps demands s->t."""
    net = with_all_paths(make_net([("s", "a"), ("a", "t"), ("s", "b"), ("b", "t")]))
    demands = [Demand("d0", "s", "t", 60.0), Demand("d1", "s", "t", 60.0)]
    return net, demands


@pytest.fixture
def zero_bg(diamond):
    return np.zeros(len(diamond.links))
