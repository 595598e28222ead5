"""Node/link graph of a fog deployment: devices, edge levels, cloud.

Times are integer microseconds throughout.  Routing is strictly
hierarchical: every non-top node has exactly one parent one level up
(a device's parent is its assigned edge), and a route climbs to the
lowest common ancestor before descending.  Same-level links are only
allowed when one end is a peer node; they are used as shortcuts.
"""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

NodeId = int
PlayerId = int


class NodeKind(enum.Enum):
    USER_DEVICE = "device"
    TRAFFIC_ROUTING_EDGE = "routing_edge"
    CAPABILITY_ADDED_EDGE = "capability_edge"
    PEER_NODE = "peer"
    CLOUD_SERVER = "cloud"

    @property
    def is_edge(self) -> bool:
        return self in (NodeKind.TRAFFIC_ROUTING_EDGE, NodeKind.CAPABILITY_ADDED_EDGE, NodeKind.PEER_NODE)


class TopologyError(ValueError):
    pass


class MissingPath(TopologyError):
    pass


class LevelViolation(TopologyError):
    pass


class DuplicateId(TopologyError):
    pass


class Unreachable(TopologyError):
    pass


class DiscontiguousPath(TopologyError):
    pass


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: NodeKind
    level: int
    service_time: int = 0
    capacity: int | None = None  # None = unbounded
    max_queue: int | None = None  # waiting requests beyond this are dropped

    def __post_init__(self) -> None:
        if self.id < 0:
            raise TopologyError(f"node id must be non-negative, got {self.id}")
        if self.level < 0:
            raise LevelViolation(f"node {self.id}: negative level {self.level}")
        if self.service_time < 0:
            raise TopologyError(f"node {self.id}: negative service time")
        if self.capacity is not None and self.capacity < 1:
            raise TopologyError(f"node {self.id}: capacity must be >= 1")
        if self.max_queue is not None and self.max_queue < 0:
            raise TopologyError(f"node {self.id}: negative max_queue")


@dataclass(frozen=True)
class Link:
    src: NodeId
    dst: NodeId
    one_way_latency: int
    bandwidth: int | None = None  # bytes/second, None = unbounded

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise TopologyError(f"self-loop link on node {self.src}")
        if self.one_way_latency < 0:
            raise TopologyError(f"link {self.src}->{self.dst}: negative latency")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise TopologyError(f"link {self.src}->{self.dst}: bandwidth must be positive")

    @property
    def key(self) -> tuple[NodeId, NodeId]:
        return (self.src, self.dst)

    def flipped(self) -> Link:
        return Link(self.dst, self.src, self.one_way_latency, self.bandwidth)


Path = list[Link]


@dataclass(frozen=True)
class LinkSpec:
    """Bidirectional link as written in a scenario; expands to two Links."""

    a: NodeId
    b: NodeId
    latency: int
    reverse_latency: int | None = None
    bandwidth: int | None = None

    def directed(self) -> tuple[Link, Link]:
        back = self.latency if self.reverse_latency is None else self.reverse_latency
        return Link(self.a, self.b, self.latency, self.bandwidth), Link(self.b, self.a, back, self.bandwidth)


@dataclass(frozen=True)
class DeviceTemplate:
    """Generates ``count`` devices numbered from ``first_id``; player i owns device first_id + i."""

    count: int
    edges: tuple[NodeId, ...]
    latency: int
    first_id: int = 1000
    reverse_latency: int | None = None
    bandwidth: int | None = None
    assignment: str = "round_robin"  # or "block"

    def expand(self) -> tuple[list[Node], list[LinkSpec], dict[NodeId, NodeId], dict[PlayerId, NodeId]]:
        if not self.edges:
            raise MissingPath("device template lists no edges")
        nodes, links, assign, players = [], [], {}, {}
        per_edge = -(-self.count // len(self.edges)) if self.count else 0
        for i in range(self.count):
            dev = self.first_id + i
            if self.assignment == "block":
                edge = self.edges[i // per_edge]
            else:
                edge = self.edges[i % len(self.edges)]
            nodes.append(Node(dev, NodeKind.USER_DEVICE, 0))
            links.append(LinkSpec(dev, edge, self.latency, self.reverse_latency, self.bandwidth))
            assign[dev] = edge
            players[i] = dev
        return nodes, links, assign, players


@dataclass(frozen=True)
class TopologySpec:
    nodes: tuple[Node, ...]
    links: tuple[LinkSpec, ...]
    assignments: Mapping[NodeId, NodeId] = field(default_factory=dict)
    players: Mapping[PlayerId, NodeId] | None = None
    devices: DeviceTemplate | None = None


class Topology:
    """Validated, immutable fog topology."""

    def __init__(
        self,
        nodes: Iterable[Node],
        links: Iterable[Link],
        device_assignment: Mapping[NodeId, NodeId],
        players: Mapping[PlayerId, NodeId] | None = None,
    ) -> None:
        self.nodes: dict[NodeId, Node] = {}
        for n in nodes:
            if n.id in self.nodes:
                raise DuplicateId(f"duplicate node id {n.id}")
            self.nodes[n.id] = n
        self.links: dict[tuple[NodeId, NodeId], Link] = {}
        for link in links:
            if link.key in self.links:
                raise DuplicateId(f"duplicate link {link.src}->{link.dst}")
            self.links[link.key] = link
        self.device_assignment = dict(device_assignment)
        devices = sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.USER_DEVICE)
        self.players: dict[PlayerId, NodeId] = dict(players) if players is not None else dict(enumerate(devices))
        self.levels = max((n.level for n in self.nodes.values()), default=-1) + 1
        self._parent: dict[NodeId, NodeId] = {}
        self._peers: dict[NodeId, list[NodeId]] = {}
        validate_topology(self)
        self._player_of = {d: p for p, d in self.players.items()}

    # -- lookups -----------------------------------------------------------

    def node(self, node_id: NodeId) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise Unreachable(f"unknown node {node_id}") from None

    def link(self, src: NodeId, dst: NodeId) -> Link:
        return self.links[(src, dst)]

    def parent(self, node_id: NodeId) -> NodeId | None:
        return self._parent.get(node_id)

    def ancestors(self, node_id: NodeId) -> list[NodeId]:
        """``node_id`` followed by its parents up to the root."""
        chain = [node_id]
        while chain[-1] in self._parent:
            chain.append(self._parent[chain[-1]])
        return chain

    def cloud_of(self, node_id: NodeId) -> NodeId:
        top = self.ancestors(node_id)[-1]
        if self.nodes[top].kind is not NodeKind.CLOUD_SERVER:
            raise Unreachable(f"node {node_id} has no path to a cloud server")
        return top

    def device_of(self, player: PlayerId) -> NodeId:
        try:
            return self.players[player]
        except KeyError:
            raise Unreachable(f"unknown player {player}") from None

    def player_of(self, device: NodeId) -> PlayerId:
        return self._player_of[device]

    def edge_of(self, player: PlayerId) -> NodeId:
        return self.device_assignment[self.device_of(player)]

    def nodes_of_kind(self, *kinds: NodeKind) -> list[NodeId]:
        return sorted(n.id for n in self.nodes.values() if n.kind in kinds)

    @property
    def edges(self) -> list[NodeId]:
        """Nodes that have at least one device assigned, in id order."""
        return sorted(set(self.device_assignment.values()))

    def players_at(self, edge: NodeId) -> frozenset[PlayerId]:
        return frozenset(p for p, d in self.players.items() if self.device_assignment[d] == edge)

    def is_cloud_segment(self, key: tuple[NodeId, NodeId]) -> bool:
        """True for links touching a cloud server (the edge-to-cloud segment)."""
        return any(self.nodes[n].kind is NodeKind.CLOUD_SERVER for n in key)

    # -- routing -----------------------------------------------------------

    def route(self, src: NodeId, dst: NodeId) -> Path:
        return route(self, src, dst)


def _check_levels(topo: Topology) -> None:
    top = topo.levels - 1
    for n in topo.nodes.values():
        if n.kind is NodeKind.USER_DEVICE and n.level != 0:
            raise LevelViolation(f"device {n.id} must be at level 0, got {n.level}")
        if n.kind is NodeKind.CLOUD_SERVER and n.level != top:
            raise LevelViolation(f"cloud {n.id} must be at top level {top}, got {n.level}")
        if n.kind not in (NodeKind.USER_DEVICE, NodeKind.CLOUD_SERVER) and not 0 < n.level < top:
            raise LevelViolation(f"{n.kind.value} node {n.id} must sit strictly between devices and cloud")


def validate_topology(topo: Topology) -> None:
    """Re-check every structural invariant; also (re)derives parent pointers."""
    _check_levels(topo)
    if not topo.nodes_of_kind(NodeKind.CLOUD_SERVER):
        raise MissingPath("topology has no cloud server")
    parent: dict[NodeId, NodeId] = {}
    peers: dict[NodeId, list[NodeId]] = {}
    for (a, b), link in topo.links.items():
        if a not in topo.nodes or b not in topo.nodes:
            raise TopologyError(f"link {a}->{b} references an unknown node")
        if (b, a) not in topo.links:
            raise MissingPath(f"link {a}->{b} has no reverse direction")
        la, lb = topo.nodes[a].level, topo.nodes[b].level
        if la == lb:
            if NodeKind.PEER_NODE not in (topo.nodes[a].kind, topo.nodes[b].kind):
                raise LevelViolation(f"same-level link {a}->{b} requires a peer node")
            peers.setdefault(a, []).append(b)
        elif abs(la - lb) != 1:
            raise LevelViolation(f"link {a}->{b} skips from level {la} to {lb}")
        elif lb == la + 1 and topo.nodes[a].kind is not NodeKind.USER_DEVICE:
            if a in parent and parent[a] != b:
                raise LevelViolation(f"node {a} has more than one upward link ({parent[a]}, {b})")
            parent[a] = b

    for dev in topo.nodes_of_kind(NodeKind.USER_DEVICE):
        edge = topo.device_assignment.get(dev)
        if edge is None:
            raise MissingPath(f"device {dev} has no assigned edge")
        if edge not in topo.nodes or topo.nodes[edge].level != 1:
            raise LevelViolation(f"device {dev} assigned to {edge}, which is not a level-1 node")
        if (dev, edge) not in topo.links:
            raise MissingPath(f"device {dev} has no link to its assigned edge {edge}")
        parent[dev] = edge
    for dev in topo.device_assignment:
        if dev not in topo.nodes or topo.nodes[dev].kind is not NodeKind.USER_DEVICE:
            raise TopologyError(f"assignment for {dev}, which is not a user device")

    for pid, dev in topo.players.items():
        if dev not in topo.nodes or topo.nodes[dev].kind is not NodeKind.USER_DEVICE:
            raise TopologyError(f"player {pid} bound to {dev}, which is not a user device")
    if len(set(topo.players.values())) != len(topo.players):
        raise TopologyError("each device hosts at most one player")

    topo._parent = parent
    topo._peers = {k: sorted(v) for k, v in peers.items()}
    for dev in topo.nodes_of_kind(NodeKind.USER_DEVICE):
        chain = topo.ancestors(dev)
        if topo.nodes[chain[-1]].kind is not NodeKind.CLOUD_SERVER:
            raise MissingPath(f"device {dev} cannot reach a cloud server (stops at {chain[-1]})")


def build_topology(spec: TopologySpec) -> Topology:
    nodes = list(spec.nodes)
    link_specs = list(spec.links)
    assign = dict(spec.assignments)
    players = dict(spec.players) if spec.players is not None else None
    if spec.devices is not None:
        dnodes, dlinks, dassign, dplayers = spec.devices.expand()
        nodes += dnodes
        link_specs += dlinks
        assign.update(dassign)
        if players is None:
            explicit = sorted(n.id for n in spec.nodes if n.kind is NodeKind.USER_DEVICE)
            players = {i: d for i, d in enumerate(explicit)}
            offset = len(players)
            players.update({offset + p: d for p, d in dplayers.items()})
    links: list[Link] = []
    for ls in link_specs:
        links.extend(ls.directed())
    return Topology(nodes, links, assign, players)


def route(topo: Topology, src: NodeId, dst: NodeId) -> Path:
    """Unique hierarchical path from ``src`` to ``dst``; ``[]`` when equal."""
    topo.node(src)
    topo.node(dst)
    if src == dst:
        return []
    up = topo.ancestors(src)
    down = topo.ancestors(dst)
    down_index = {n: i for i, n in enumerate(down)}
    for i, x in enumerate(up):
        if x in down_index:
            j = down_index[x]
            hops = up[: i + 1] + down[:j][::-1]
            return [topo.links[(a, b)] for a, b in zip(hops, hops[1:])]
        for y in topo._peers.get(x, ()):
            if y in down_index:
                j = down_index[y]
                hops = up[: i + 1] + down[: j + 1][::-1]
                return [topo.links[(a, b)] for a, b in zip(hops, hops[1:])]
    raise Unreachable(f"no route from {src} to {dst}")


def path_latency(topo: Topology | None, path: Sequence[Link]) -> int:
    total = 0
    for prev, link in zip(path, path[1:]):
        if prev.dst != link.src:
            raise DiscontiguousPath(f"hop {prev.src}->{prev.dst} is followed by {link.src}->{link.dst}")
    for link in path:
        total += link.one_way_latency
    return total
