"""Workload execution models and the serving primitives they rely on."""

from __future__ import annotations

import heapq
import math
from collections import deque
from collections.abc import Sequence
from functools import lru_cache
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from fogsim.engine import SimTime
from fogsim.protocol import DEFAULT_HEADER_BYTES, GpsUpdate
from fogsim.topology import Node, NodeId, NodeKind, Topology


class PlacementError(ValueError):
    pass


class EmptyBatch(PlacementError):
    pass


class NoPeers(PlacementError):
    pass


class QueueOverflow(RuntimeError):
    pass


def _ratio(value: float | str | Fraction) -> Fraction:
    # str() first so 0.7 means 7/10, not its binary approximation
    r = value if isinstance(value, Fraction) else Fraction(str(value))
    if not 0 <= r <= 1:
        raise PlacementError(f"filter ratio must lie in [0, 1], got {value}")
    return r


# -- execution models ---------------------------------------------------------


@dataclass(frozen=True)
class CloudOnly:
    pass


@dataclass(frozen=True)
class OffloadDeviceToEdge:
    pass


@dataclass(frozen=True)
class OffloadCloudToEdge:
    pass


@dataclass(frozen=True)
class Aggregate:
    filter_ratio: Fraction
    batch_window: SimTime

    def __post_init__(self) -> None:
        object.__setattr__(self, "filter_ratio", _ratio(self.filter_ratio))
        if self.batch_window <= 0:
            raise PlacementError("batch window must be positive")


@dataclass(frozen=True)
class Share:
    policy: str = "round_robin"  # or "capacity_weighted"

    def __post_init__(self) -> None:
        if self.policy not in ("round_robin", "capacity_weighted"):
            raise PlacementError(f"unknown share policy {self.policy!r}")


@dataclass(frozen=True)
class Always:
    def __call__(self, req: GpsUpdate, topo: Topology) -> bool:
        return True


@dataclass(frozen=True)
class RequestLarger:
    threshold_bytes: int

    def __call__(self, req: GpsUpdate, topo: Topology) -> bool:
        return req.request_bytes > self.threshold_bytes


@dataclass(frozen=True)
class EdgeKindIs:
    kind: NodeKind

    def __call__(self, req: GpsUpdate, topo: Topology) -> bool:
        return topo.node(topo.edge_of(req.player)).kind is self.kind


Predicate = Union[Always, RequestLarger, EdgeKindIs]


@dataclass(frozen=True)
class Hybrid:
    rules: tuple[tuple[Predicate, ExecutionModel], ...]

    def __post_init__(self) -> None:
        if not self.rules:
            raise PlacementError("hybrid model needs at least one rule")
        if not isinstance(self.rules[-1][0], Always):
            raise PlacementError("the last hybrid rule must be a catch-all")

    def select(self, req: GpsUpdate, topo: Topology) -> ExecutionModel:
        for predicate, model in self.rules:
            if predicate(req, topo):
                return model.select(req, topo) if isinstance(model, Hybrid) else model
        raise AssertionError("unreachable: catch-all rule")


ExecutionModel = Union[CloudOnly, OffloadDeviceToEdge, OffloadCloudToEdge, Aggregate, Share, Hybrid]


def resolve(model: ExecutionModel, req: GpsUpdate, topo: Topology) -> ExecutionModel:
    """The non-hybrid model that governs ``req``."""
    return model.select(req, topo) if isinstance(model, Hybrid) else model


def place_request(model: ExecutionModel, req: GpsUpdate, topo: Topology) -> NodeId:
    model = resolve(model, req, topo)
    device = topo.device_of(req.player)
    if isinstance(model, CloudOnly):
        return topo.cloud_of(device)
    if isinstance(model, (OffloadDeviceToEdge, OffloadCloudToEdge, Aggregate)):
        return topo.device_assignment[device]
    if isinstance(model, Share):
        peers = topo.nodes_of_kind(NodeKind.PEER_NODE)
        if not peers:
            raise NoPeers("share model needs at least one peer node")
        if model.policy == "round_robin":
            return peers[req.request_id % len(peers)]
        weights = [topo.node(p).capacity or 1 for p in peers]
        return peers[weighted_slot(req.request_id, weights)]
    raise PlacementError(f"unknown execution model {model!r}")


# -- aggregation --------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SensorReading:
    sensor: NodeId
    payload_bytes: int
    t: SimTime

    def __post_init__(self) -> None:
        if self.payload_bytes <= 0:
            raise PlacementError("sensor readings must carry a positive payload")


@dataclass(frozen=True)
class AggregatedMessage:
    bytes: int
    readings: int
    payload_bytes: int

    def describe(self) -> str:
        return f"msg=aggregate;readings={self.readings};bytes={self.bytes}"


def aggregate_batch(
    readings: list[SensorReading], filter_ratio: float | Fraction, header_bytes: int = DEFAULT_HEADER_BYTES
) -> AggregatedMessage:
    """Collapse a batch into one upstream message; ``readings`` is emptied."""
    if not readings:
        raise EmptyBatch("cannot aggregate an empty batch")
    r = _ratio(filter_ratio)
    total = sum(x.payload_bytes for x in readings)
    kept = math.ceil((1 - r) * total)
    msg = AggregatedMessage(header_bytes + kept, len(readings), total)
    readings.clear()
    return msg


# -- sharing ------------------------------------------------------------------


def share_loads(tasks: int, weights: Sequence[int | float], policy: str) -> list[int]:
    if not weights:
        raise NoPeers("no peers to share with")
    n = len(weights)
    if policy == "round_robin":
        return [tasks // n + (1 if i < tasks % n else 0) for i in range(n)]
    if policy != "capacity_weighted":
        raise PlacementError(f"unknown share policy {policy!r}")
    ws = [Fraction(str(w)) for w in weights]
    if any(w <= 0 for w in ws):
        raise PlacementError("capacity weights must be positive")
    total = sum(ws)
    quotas = [tasks * w / total for w in ws]
    loads = [math.floor(q) for q in quotas]
    left = tasks - sum(loads)
    # largest remainder; ties go to the earlier peer
    order = sorted(range(n), key=lambda i: (-(quotas[i] - loads[i]), i))
    for i in order[:left]:
        loads[i] += 1
    return loads


def share_assign(tasks: int, peers: Sequence[tuple[NodeId, int | float]], policy: str = "round_robin") -> dict[int, NodeId]:
    """Map task index -> peer.  Round robin interleaves; capacity-weighted hands out contiguous blocks."""
    if not peers:
        raise NoPeers("no peers to share with")
    ids = [p for p, _ in peers]
    if policy == "round_robin":
        return {i: ids[i % len(ids)] for i in range(tasks)}
    loads = share_loads(tasks, [w for _, w in peers], policy)
    out: dict[int, NodeId] = {}
    i = 0
    for peer, load in zip(ids, loads):
        for _ in range(load):
            out[i] = peer
            i += 1
    return out


@lru_cache(maxsize=64)
def _smooth_cycle(weights: tuple[int, ...]) -> tuple[int, ...]:
    current = [0] * len(weights)
    total = sum(weights)
    order = []
    for _ in range(total):
        for i, w in enumerate(weights):
            current[i] += w
        best = max(range(len(weights)), key=lambda i: (current[i], -i))
        current[best] -= total
        order.append(best)
    return tuple(order)


def weighted_slot(index: int, weights: Sequence[int]) -> int:
    """Peer position for the ``index``-th task under smooth weighted round robin.

    Every cycle of sum(weights) tasks gives peer i exactly weights[i] tasks,
    spread out rather than in blocks.
    """
    cycle = _smooth_cycle(tuple(weights))
    return cycle[index % len(cycle)]


# -- serving ------------------------------------------------------------------


class FifoServer:
    """Single FIFO queue feeding ``capacity`` identical service slots.

    Arrivals must be presented in non-decreasing time order.  Because
    service time is fixed, a request's completion is known on arrival.
    """

    def __init__(self, node: Node) -> None:
        self.node = node
        self.service_time = node.service_time
        self.capacity = node.capacity
        self.max_queue = node.max_queue
        self._slots: list[SimTime] = []  # free-at times, one per busy-or-used slot
        self._starts: deque[SimTime] = deque()  # start times of accepted requests
        self._last_arrival = 0
        self.served = 0
        self.dropped = 0

    def queue_and_serve(self, arrival: SimTime) -> SimTime:
        if arrival < self._last_arrival:
            raise ValueError("arrivals must be non-decreasing")
        self._last_arrival = arrival
        starts = self._starts
        while starts and starts[0] <= arrival:
            starts.popleft()
        slots = self._slots
        if self.capacity is None or len(slots) < self.capacity:
            start = arrival
        else:
            start = max(arrival, slots[0])
        if start > arrival and self.max_queue is not None and len(starts) >= self.max_queue:
            self.dropped += 1
            raise QueueOverflow(f"node {self.node.id}: {len(starts)} requests already waiting")
        if self.capacity is not None:
            if len(slots) < self.capacity:
                heapq.heappush(slots, start + self.service_time)
            else:
                heapq.heapreplace(slots, start + self.service_time)
        if start > arrival:
            starts.append(start)
        self.served += 1
        return start + self.service_time


def queue_and_serve(server: FifoServer, arrival: SimTime) -> SimTime:
    return server.queue_and_serve(arrival)
