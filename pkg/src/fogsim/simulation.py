"""Event handlers that run the location-game workload over a topology.

One :class:`GameSimulation` is one engine run: either the cloud-only
baseline (every request placed on the cloud) or a fog run under any
placement model.  Messages travel hop by hop; each hop is a
``MessageArrival`` event and its bytes are counted on arrival, so link
totals always equal what the trace shows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from fogsim.engine import Engine, Event, EventKind, Rng, SimTime
from fogsim.metrics import Metrics, MetricsReport
from fogsim.placement import (
    Aggregate,
    AggregatedMessage,
    CloudOnly,
    ExecutionModel,
    FifoServer,
    OffloadCloudToEdge,
    QueueOverflow,
    SensorReading,
    aggregate_batch,
    place_request,
    resolve,
)
from fogsim.protocol import (
    GlobalView,
    GpsUpdate,
    LocalView,
    MessageSizes,
    Response,
    StaleDelta,
    SyncDelta,
    apply_sync_delta,
    build_sync_delta,
    generate_updates,
    handle_update_cloud,
    handle_update_edge,
)
from fogsim.topology import Link, NodeId, NodeKind, Topology

ARRIVE = EventKind.MESSAGE_ARRIVAL
DONE = EventKind.SERVICE_COMPLETE


@dataclass(slots=True)
class Message:
    kind: str  # request | response | sync | aggregate
    ref: int
    nbytes: int
    path: tuple[Link, ...]
    hop: int
    body: Any

    def describe(self) -> str:
        link = self.path[self.hop]
        return f"msg={self.kind};req={self.ref};link={link.src}>{link.dst};bytes={self.nbytes}"


@dataclass(slots=True)
class Job:
    update: GpsUpdate
    model: ExecutionModel

    def describe(self) -> str:
        return f"req={self.update.request_id};player={self.update.player}"


@dataclass(slots=True)
class SyncJob:
    delta: SyncDelta

    def describe(self) -> str:
        return "sync;" + self.delta.describe()


@dataclass(slots=True)
class Issue:
    update: GpsUpdate

    def describe(self) -> str:
        return f"req={self.update.request_id};player={self.update.player}"


@dataclass(slots=True)
class TimerNote:
    entries: int = 0
    nbytes: int = 0

    def describe(self) -> str:
        return f"entries={self.entries};bytes={self.nbytes}"


def workload_updates(
    topo: Topology, seed: int, rate: float, horizon: SimTime, arrival: str, sizes: MessageSizes
) -> list[GpsUpdate]:
    """All players' updates, numbered by (issued_at, player)."""
    rng = Rng(seed)
    merged: list[GpsUpdate] = []
    for player in sorted(topo.players):
        merged.extend(generate_updates(player, rate, horizon, rng, arrival, sizes))
    merged.sort(key=lambda u: (u.issued_at, u.player))
    return [GpsUpdate(u.player, u.position, u.issued_at, u.request_bytes, u.response_bytes, i) for i, u in enumerate(merged)]


class Network:
    """Hop-by-hop message transport with per-link FIFO serialization."""

    def __init__(self, engine: Engine, topo: Topology, metrics: Metrics) -> None:
        self.engine = engine
        self.topo = topo
        self.metrics = metrics
        self._routes: dict[tuple[NodeId, NodeId], tuple[Link, ...]] = {}
        self._busy: dict[tuple[NodeId, NodeId], SimTime] = {}

    def path(self, src: NodeId, dst: NodeId) -> tuple[Link, ...]:
        key = (src, dst)
        p = self._routes.get(key)
        if p is None:
            p = self._routes[key] = tuple(self.topo.route(src, dst))
        return p

    def _hop(self, msg: Message, now: SimTime) -> None:
        link = msg.path[msg.hop]
        t = now
        if link.bandwidth is not None:
            key = (link.src, link.dst)
            start = max(now, self._busy.get(key, 0))
            t = start + -(-msg.nbytes * 1_000_000 // link.bandwidth)
            self._busy[key] = t
        self.engine.schedule(t + link.one_way_latency, ARRIVE, link.dst, msg)

    def send(self, kind: str, ref: int, nbytes: int, src: NodeId, dst: NodeId, body: Any, now: SimTime) -> bool:
        """Start a message; returns False when src == dst (nothing to transmit)."""
        path = self.path(src, dst)
        if not path:
            return False
        self._hop(Message(kind, ref, nbytes, path, 0, body), now)
        return True

    def arrive(self, ev: Event) -> Message | None:
        """Account one hop; returns the message once it reaches its destination."""
        msg: Message = ev.payload
        link = msg.path[msg.hop]
        self.metrics.add_traffic((link.src, link.dst), msg.nbytes)
        if msg.hop + 1 < len(msg.path):
            self._hop(Message(msg.kind, msg.ref, msg.nbytes, msg.path, msg.hop + 1, msg.body), ev.time)
            return None
        return msg


def cloud_segment(topo: Topology) -> list[tuple[NodeId, NodeId]]:
    return [k for k in topo.links if topo.is_cloud_segment(k)]


class GameSimulation:
    """One run of the location game under ``model``.

    ``sync_interval`` <= 0 disables edge-to-cloud synchronization.
    ``cloud_fraction`` sends that share of requests (seeded coin per
    request id) to the cloud regardless of ``model``.
    """

    def __init__(
        self,
        topo: Topology,
        updates: list[GpsUpdate],
        model: ExecutionModel,
        *,
        horizon: SimTime,
        warmup: SimTime = 0,
        sync_interval: SimTime = 1_000_000,
        sizes: MessageSizes = MessageSizes(),
        cloud_fraction: float = 0.0,
        seed: int = 0,
        scenario: str = "fog",
    ) -> None:
        self.topo = topo
        self.updates = updates
        self.model = model
        self.horizon = horizon
        self.warmup = warmup
        self.sync_interval = sync_interval
        self.sizes = sizes
        self.scenario = scenario
        self.engine = Engine()
        self.metrics = Metrics(topo.links.keys(), cloud_segment(topo))
        self.net = Network(self.engine, topo, self.metrics)
        self.servers = {nid: FifoServer(n) for nid, n in topo.nodes.items() if n.kind is not NodeKind.USER_DEVICE}
        self.global_view = GlobalView()
        self.local_views = {e: LocalView(e, topo.players_at(e)) for e in topo.edges}
        self.stale_deltas = 0
        # history kept for invariant checks: (update, served_at, node, (time, seq))
        self.served: list[tuple[GpsUpdate, SimTime, NodeId, tuple[int, int]]] = []
        self.deltas: list[tuple[tuple[int, int], SyncDelta]] = []
        self.applied: list[tuple[SimTime, SyncDelta]] = []
        self.in_flight_deltas: list[SyncDelta] = []
        self._cloud_coin: list[bool] | None = None
        if cloud_fraction > 0:
            coin = Rng(seed).substream("cloud-fraction")
            self._cloud_coin = [coin.random() < cloud_fraction for _ in updates]
        self._issue: dict[int, SimTime] = {}

        eng = self.engine
        eng.on(EventKind.REQUEST_ISSUE, self._on_issue)
        eng.on(ARRIVE, self._on_arrival)
        eng.on(DONE, self._on_done)
        eng.on(EventKind.SYNC_TIMER, self._on_sync_timer)
        for u in updates:
            eng.schedule(u.issued_at, EventKind.REQUEST_ISSUE, topo.device_of(u.player), Issue(u))
        if sync_interval > 0 and horizon >= sync_interval:
            for e in self.local_views:
                eng.schedule(sync_interval, EventKind.SYNC_TIMER, e, TimerNote())
        eng.schedule(horizon, EventKind.MEASUREMENT_END)

    # -- handlers ---------------------------------------------------------

    def _on_issue(self, ev: Event) -> None:
        u: GpsUpdate = ev.payload.update
        self.metrics.record_issue(u.request_id, u.issued_at)
        if self._cloud_coin is not None and self._cloud_coin[u.request_id]:
            model = CloudOnly()
        else:
            model = resolve(self.model, u, self.topo)
        target = place_request(model, u, self.topo)
        job = Job(u, model)
        if not self.net.send("request", u.request_id, u.request_bytes, ev.node, target, job, ev.time):
            self._serve(target, job, ev.time)

    def _on_arrival(self, ev: Event) -> None:
        msg = self.net.arrive(ev)
        if msg is None:
            return
        kind = msg.kind
        if kind == "request":
            self._serve(ev.node, msg.body, ev.time)
        elif kind == "response":
            r: Response = msg.body
            self.metrics.record_response(r.request_id, self._issue.pop(r.request_id), ev.time, r.player)
        elif kind == "sync":
            service = self.topo.nodes[ev.node].service_time
            self.engine.schedule(ev.time + service, DONE, ev.node, SyncJob(msg.body))

    def _serve(self, node: NodeId, job: Job, now: SimTime) -> None:
        try:
            done = self.servers[node].queue_and_serve(now)
        except QueueOverflow:
            self.metrics.record_drop(job.update.request_id, job.update.issued_at)
            return
        self.engine.schedule(done, DONE, node, job)

    def _on_done(self, ev: Event) -> None:
        job = ev.payload
        if isinstance(job, SyncJob):
            delta = job.delta
            self.in_flight_deltas.remove(delta)
            try:
                apply_sync_delta(self.global_view, delta, ev.time)
            except StaleDelta:
                self.stale_deltas += 1
                return
            self.applied.append((ev.time, delta))
            return
        u = job.update
        model = job.model
        if isinstance(model, CloudOnly):
            resp = handle_update_cloud(self.global_view, u, ev.time)
        elif isinstance(model, OffloadCloudToEdge):
            resp = handle_update_edge(self.local_views[ev.node], u, ev.time)
        else:
            # device-compute offload terminates at the edge; no shared state
            resp = Response(u.request_id, u.player, ev.time, u.response_bytes)
        self.served.append((u, ev.time, ev.node, (ev.time, ev.seq)))
        self._issue[u.request_id] = u.issued_at
        device = self.topo.device_of(u.player)
        if not self.net.send("response", u.request_id, u.response_bytes, ev.node, device, resp, ev.time):
            self.metrics.record_response(u.request_id, self._issue.pop(u.request_id), ev.time, u.player)

    def _on_sync_timer(self, ev: Event) -> None:
        edge = ev.node
        delta = build_sync_delta(self.local_views[edge], ev.time, self.sizes)
        note: TimerNote = ev.payload
        note.entries = len(delta.entries)
        note.nbytes = delta.wire_bytes if delta.entries else 0
        self.deltas.append(((ev.time, ev.seq), delta))
        if delta.entries:
            self.in_flight_deltas.append(delta)
            cloud = self.topo.cloud_of(edge)
            self.net.send("sync", -1, delta.wire_bytes, edge, cloud, delta, ev.time)
        nxt = ev.time + self.sync_interval
        if nxt <= self.horizon:
            self.engine.schedule(nxt, EventKind.SYNC_TIMER, edge, TimerNote())

    # -- driving ----------------------------------------------------------

    def run(self) -> list[Event]:
        self.engine.run_until(self.horizon)
        return self.engine.trace

    def report(self) -> MetricsReport:
        return self.metrics.report(self.scenario, len(self.topo.players), (self.warmup, self.horizon))

    def flush_sync(self) -> GlobalView:
        """Deliver deltas still in flight, then push every edge's remaining dirty entries.

        Operates outside simulated time; used to compare end states.
        """
        for delta in list(self.in_flight_deltas):
            try:
                apply_sync_delta(self.global_view, delta, max(delta.built_at, self.engine.now()))
            except StaleDelta:
                self.stale_deltas += 1
        self.in_flight_deltas.clear()
        t = self.engine.now()
        for view in self.local_views.values():
            delta = build_sync_delta(view, t, self.sizes)
            if delta.entries:
                apply_sync_delta(self.global_view, delta, t)
        return self.global_view


def simulate(
    topo: Topology,
    updates: list[GpsUpdate],
    model: ExecutionModel,
    **kwargs: Any,
) -> GameSimulation:
    sim = GameSimulation(topo, updates, model, **kwargs)
    sim.run()
    return sim


# -- sensor aggregation -------------------------------------------------------


class AggregationSimulation:
    """Sensors stream readings to their edge; every ``batch_window`` the edge
    forwards one aggregated message to the cloud."""

    def __init__(self, topo: Topology, readings: list[SensorReading], model: Aggregate, horizon: SimTime,
                 header_bytes: int = MessageSizes().header_bytes) -> None:
        self.topo = topo
        self.model = model
        self.horizon = horizon
        self.header_bytes = header_bytes
        self.engine = Engine()
        self.metrics = Metrics(topo.links.keys(), cloud_segment(topo))
        self.net = Network(self.engine, topo, self.metrics)
        self.batches: dict[NodeId, list[SensorReading]] = {e: [] for e in topo.edges}
        self.forwarded: list[tuple[NodeId, SimTime, list[SensorReading], AggregatedMessage]] = []
        self.engine.on(EventKind.REQUEST_ISSUE, self._on_reading)
        self.engine.on(ARRIVE, self._on_arrival)
        self.engine.on(EventKind.SYNC_TIMER, self._on_window)
        for r in sorted(readings, key=lambda r: (r.t, r.sensor)):
            self.engine.schedule(r.t, EventKind.REQUEST_ISSUE, r.sensor, r)
        for e in self.batches:
            self.engine.schedule(model.batch_window, EventKind.SYNC_TIMER, e)

    def _on_reading(self, ev: Event) -> None:
        r: SensorReading = ev.payload
        edge = self.topo.device_assignment[r.sensor]
        self.net.send("request", -1, r.payload_bytes, r.sensor, edge, r, ev.time)

    def _on_arrival(self, ev: Event) -> None:
        msg = self.net.arrive(ev)
        if msg is not None and msg.kind == "request":
            self.batches[ev.node].append(msg.body)

    def _on_window(self, ev: Event) -> None:
        batch = self.batches[ev.node]
        if batch:
            readings = list(batch)
            agg = aggregate_batch(batch, self.model.filter_ratio, self.header_bytes)
            self.forwarded.append((ev.node, ev.time, readings, agg))
            self.net.send("aggregate", -1, agg.bytes, ev.node, self.topo.cloud_of(ev.node), agg, ev.time)
        nxt = ev.time + self.model.batch_window
        if nxt <= self.horizon:
            self.engine.schedule(nxt, EventKind.SYNC_TIMER, ev.node)

    def run(self) -> list[Event]:
        return self.engine.run_until(self.horizon)


def serve_shared(servers: dict[NodeId, FifoServer], assignment: dict[int, NodeId], arrival: SimTime = 0) -> dict[int, SimTime]:
    """Completion time of each shared task when all arrive together at their assigned peer."""
    return {task: servers[peer].queue_and_serve(arrival) for task, peer in sorted(assignment.items())}

