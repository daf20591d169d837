"""Network model, SNDlib native-format parsing and candidate path enumeration.

Links are undirected: traffic in either direction is charged to the same
capacity. The one exception is an antiparallel pair (``A B`` and ``B A``
listed as two links), which SNDlib uses for bidirectional networks such as
janos-us; each direction then has its own capacity and a path uses the link
oriented along its direction of travel.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

BUNDLED_TOPOLOGIES = ("nobel-us", "janos-us", "janos-us-ca", "germany50", "ta2")


class ParseError(ValueError):
    """Malformed SNDlib document. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    id: str
    source: str
    target: str
    capacity: float

    def __post_init__(self):
        if not self.capacity > 0:
            raise TopologyError(f"link {self.id}: capacity must be positive, got {self.capacity}")

    @property
    def endpoints(self) -> frozenset[str]:
        return frozenset((self.source, self.target))


@dataclass(frozen=True)
class Path:
    """A simple path. ``links`` holds indices into ``Network.links``."""

    nodes: tuple[str, ...]
    links: tuple[int, ...]

    @property
    def source(self) -> str:
        return self.nodes[0]

    @property
    def target(self) -> str:
        return self.nodes[-1]

    @property
    def hops(self) -> int:
        return len(self.links)

    def traverses(self, link_index: int) -> bool:
        return link_index in self.links

    def position(self, node: str) -> int:
        return self.nodes.index(node)

    def __contains__(self, node: str) -> bool:
        return node in self.nodes


@dataclass(frozen=True)
class Network:
    nodes: tuple[str, ...]
    links: tuple[Link, ...]
    path_catalog: Mapping[tuple[str, str], tuple[Path, ...]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        if len(set(self.nodes)) != len(self.nodes):
            raise TopologyError("duplicate node identifiers")
        known = set(self.nodes)
        arcs: dict[tuple[str, str], int] = {}
        pairs: dict[frozenset[str], list[int]] = {}
        ids = set()
        for i, link in enumerate(self.links):
            if link.id in ids:
                raise TopologyError(f"duplicate link id {link.id}")
            ids.add(link.id)
            for end in (link.source, link.target):
                if end not in known:
                    raise TopologyError(f"link {link.id}: unknown node {end}")
            if link.source == link.target:
                raise TopologyError(f"link {link.id}: self-loop on {link.source}")
            key = (link.source, link.target)
            if key in arcs:
                raise TopologyError(f"link {link.id}: duplicates link {self.links[arcs[key]].id}")
            same = pairs.setdefault(link.endpoints, [])
            if same:
                other = self.links[same[0]]
                if len(same) > 1 or (other.source, other.target) != (link.target, link.source):
                    raise TopologyError(f"link {link.id}: duplicates link {other.id}")
            same.append(i)
            arcs[key] = i
        for i, link in enumerate(self.links):
            arcs.setdefault((link.target, link.source), i)
        object.__setattr__(self, "_arcs", arcs)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.nodes)})
        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for u, v in arcs:
            adj[u].append(v)
        object.__setattr__(self, "_adj", {n: tuple(sorted(vs)) for n, vs in adj.items()})

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.links == other.links
            and dict(self.path_catalog) == dict(other.path_catalog)
        )

    def neighbors(self, node: str) -> tuple[str, ...]:
        return self._adj[node]

    def node_index(self, node: str) -> int:
        return self._index[node]

    def link_index(self, u: str, v: str) -> int:
        """Index of the link carrying traffic from ``u`` to ``v``."""
        try:
            return self._arcs[(u, v)]
        except KeyError:
            raise TopologyError(f"no link between {u} and {v}") from None

    def capacities(self) -> np.ndarray:
        return np.array([link.capacity for link in self.links], dtype=float)

    def make_path(self, nodes: Sequence[str]) -> Path:
        nodes = tuple(nodes)
        if len(nodes) < 2:
            raise TopologyError("a path needs at least two nodes")
        if len(set(nodes)) != len(nodes):
            raise TopologyError(f"path {nodes} is not simple")
        return Path(nodes, tuple(self.link_index(u, v) for u, v in zip(nodes, nodes[1:])))

    def paths(self, src: str, dst: str) -> tuple[Path, ...]:
        return tuple(self.path_catalog.get((src, dst), ()))

    def with_capacity(self, capacity: float) -> "Network":
        links = tuple(replace(link, capacity=float(capacity)) for link in self.links)
        return replace(self, links=links)

    def hop_distances(self, src: str) -> dict[str, int]:
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in self._adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def diameter(self) -> int:
        """Largest finite hop distance (disconnected pairs are ignored)."""
        return max((max(self.hop_distances(n).values()) for n in self.nodes), default=0)


# --- SNDlib native format ---------------------------------------------------

_NODE_RE = re.compile(r"^(\S+)\s*\(\s*(\S+)\s+(\S+)\s*\)")
_LINK_RE = re.compile(r"^(\S+)\s*\(\s*(\S+)\s+(\S+)\s*\)\s*(.*)$")
_FLOAT_RE = re.compile(r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?")


def _link_capacity(rest: str) -> float | None:
    # <pre_installed_capacity> <costs...> ( {<module_capacity> <module_cost>}* )
    head, _, modules = rest.partition("(")
    fields = _FLOAT_RE.findall(head)
    if fields and float(fields[0]) > 0:
        return float(fields[0])
    mods = _FLOAT_RE.findall(modules)
    if mods:
        return max(float(c) for c in mods[0::2])
    return None


def parse_sndlib_native(text: str, capacity: float | None = None, name: str = "") -> Network:
    """Parse the NODES and LINKS sections of an SNDlib native document.

    Link capacity is the pre-installed capacity when positive, otherwise the
    largest module capacity. ``capacity`` overrides every link uniformly.
    """
    nodes: list[str] = []
    raw_links: list[tuple[int, str, str, str, float | None]] = []
    section = None
    seen_nodes = False
    seen_links = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped or stripped.startswith("?"):
            continue
        if section is None:
            head = stripped.split("(")[0].strip().upper()
            if stripped.endswith("(") and head:
                if head in ("NODES", "LINKS") and (seen_nodes if head == "NODES" else seen_links):
                    raise ParseError(f"repeated {head} section", lineno)
                section = head
                seen_nodes |= head == "NODES"
                seen_links |= head == "LINKS"
                continue
            raise ParseError(f"unexpected content outside a section: {stripped!r}", lineno)
        if stripped == ")":
            section = None
            continue
        if section == "NODES":
            m = _NODE_RE.match(stripped) or re.match(r"^(\S+)$", stripped)
            if not m:
                raise ParseError(f"malformed node entry: {stripped!r}", lineno)
            node = m.group(1)
            if node in nodes:
                raise ParseError(f"duplicate node {node}", lineno)
            nodes.append(node)
        elif section == "LINKS":
            m = _LINK_RE.match(stripped)
            if not m:
                raise ParseError(f"malformed link entry: {stripped!r}", lineno)
            lid, src, dst, rest = m.groups()
            raw_links.append((lineno, lid, src, dst, _link_capacity(rest)))
    if section is not None:
        raise ParseError(f"unterminated {section} section")
    if not seen_nodes or not seen_links:
        raise ParseError("document must contain NODES and LINKS sections")

    known = set(nodes)
    links: list[Link] = []
    by_arc: dict[tuple[str, str], str] = {}
    by_pair: dict[frozenset[str], list[tuple[str, str]]] = {}
    ids: set[str] = set()
    for lineno, lid, src, dst, cap in raw_links:
        for end in (src, dst):
            if end not in known:
                raise ParseError(f"link {lid} references unknown node {end}", lineno)
        if src == dst:
            raise ParseError(f"link {lid} is a self-loop", lineno)
        if lid in ids:
            raise ParseError(f"duplicate link id {lid}", lineno)
        pair = frozenset((src, dst))
        prior = by_pair.get(pair, [])
        if (src, dst) in by_arc or (prior and (len(prior) > 1 or prior[0] != (dst, src))):
            raise ParseError(f"duplicate link {lid} between {src} and {dst}", lineno)
        cap = capacity if capacity is not None else cap
        if cap is None or cap <= 0:
            raise ParseError(f"link {lid} has no usable capacity", lineno)
        ids.add(lid)
        by_arc[(src, dst)] = lid
        by_pair.setdefault(pair, []).append((src, dst))
        links.append(Link(lid, src, dst, float(cap)))
    return Network(tuple(nodes), tuple(links), {}, name)


def to_sndlib_native(net: Network) -> str:
    lines = ["?SNDlib native format; type: network; version: 1.0"]
    if net.name:
        lines.append(f"# network {net.name}")
    lines += ["", "NODES ("]
    lines += [f"  {n}" for n in net.nodes]
    lines += [")", "", "LINKS ("]
    for link in net.links:
        lines.append(
            f"  {link.id} ( {link.source} {link.target} ) {link.capacity!r} 0.00 0.00 0.00 ( )"
        )
    lines += [")", ""]
    return "\n".join(lines)


def load_topology(name_or_path: str, capacity: float | None = None) -> Network:
    """Load a bundled topology by name (e.g. ``"nobel-us"``) or a file path."""
    if name_or_path in BUNDLED_TOPOLOGIES:
        text = resources.files("vnfplace.data").joinpath(f"{name_or_path}.txt").read_text()
        name = name_or_path
    else:
        with open(name_or_path) as fh:
            text = fh.read()
        name = re.sub(r"\.txt$", "", name_or_path.replace("\\", "/").rsplit("/", 1)[-1])
    return parse_sndlib_native(text, capacity=capacity, name=name)


# --- path enumeration -------------------------------------------------------


def enumerate_paths(net: Network, src: str, dst: str, k: int = 5, max_hops: int | None = None) -> list[Path]:
    """Up to ``k`` simple paths ordered by hop count, then node sequence."""
    if src == dst:
        raise TopologyError("source and destination must differ")
    for n in (src, dst):
        if n not in net._index:
            raise TopologyError(f"unknown node {n}")
    if k < 1:
        raise ValueError("k must be positive")
    if max_hops is None:
        max_hops = net.diameter() + 2
    # hop distance to dst is a lower bound on the remaining hops of any completion
    to_dst = net.hop_distances(dst)
    if src not in to_dst:
        return []
    found: list[tuple[str, ...]] = []
    for hops in range(to_dst[src], max_hops + 1):
        stack = [src]
        visited = {src}

        def walk(u: str, left: int) -> bool:
            if left == 0:
                if u == dst:
                    found.append(tuple(stack))
                    return len(found) >= k
                return False
            for v in net.neighbors(u):
                if v in visited or to_dst.get(v, max_hops + 1) > left - 1:
                    continue
                if v == dst and left > 1:
                    continue
                stack.append(v)
                visited.add(v)
                done = walk(v, left - 1)
                stack.pop()
                visited.discard(v)
                if done:
                    return True
            return False

        if walk(src, hops):
            break
    return [net.make_path(p) for p in found]


def build_path_catalog(
    net: Network,
    pairs: Iterable[tuple[str, str]],
    k: int = 5,
    max_hops: int | None = None,
) -> tuple[Network, list[str]]:
    """Return a copy of ``net`` with catalog entries for ``pairs`` and a warnings list."""
    pairs = list(pairs)
    if not pairs:
        return net, []
    if max_hops is None:
        max_hops = net.diameter() + 2
    catalog = dict(net.path_catalog)
    warnings = []
    for src, dst in pairs:
        if (src, dst) in catalog:
            continue
        paths = tuple(enumerate_paths(net, src, dst, k, max_hops))
        if not paths:
            warnings.append(f"no path from {src} to {dst} within {max_hops} hops")
        catalog[(src, dst)] = paths
    return replace(net, path_catalog=catalog), warnings
