"""Partitioned game-server state: edge-local views, cloud global view, sync deltas."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

from fogsim.engine import US_PER_S, Rng, SimTime
from fogsim.topology import NodeId, PlayerId

Position = tuple[int, int]  # (lat, lon) in microdegrees

DEFAULT_REQUEST_BYTES = 256
DEFAULT_RESPONSE_BYTES = 512
DEFAULT_HEADER_BYTES = 32
DEFAULT_PER_ENTRY_BYTES = 64

# Random-walk anchor: Belfast, in microdegrees.
ORIGIN: Position = (54_584_000, -5_934_000)
WALK_SPREAD = 5_000
WALK_STEP = 50


class ProtocolError(ValueError):
    pass


class ForeignPlayer(ProtocolError):
    pass


class StaleDelta(ProtocolError):
    pass


@dataclass(frozen=True, slots=True)
class GpsUpdate:
    player: PlayerId
    position: Position
    issued_at: SimTime
    request_bytes: int = DEFAULT_REQUEST_BYTES
    response_bytes: int = DEFAULT_RESPONSE_BYTES
    request_id: int = -1

    def __post_init__(self) -> None:
        if self.request_bytes <= 0 or self.response_bytes <= 0:
            raise ProtocolError("message sizes must be positive")


@dataclass(frozen=True, slots=True)
class Response:
    request_id: int
    player: PlayerId
    served_at: SimTime
    response_bytes: int


@dataclass(frozen=True, slots=True)
class MessageSizes:
    request_bytes: int = DEFAULT_REQUEST_BYTES
    response_bytes: int = DEFAULT_RESPONSE_BYTES
    header_bytes: int = DEFAULT_HEADER_BYTES
    per_entry_bytes: int = DEFAULT_PER_ENTRY_BYTES

    def delta_bytes(self, entries: int) -> int:
        return self.header_bytes + self.per_entry_bytes * entries


def generate_updates(
    player: PlayerId,
    rate: float,
    horizon: SimTime,
    rng: Rng,
    arrival: str = "poisson",
    sizes: MessageSizes = MessageSizes(),
) -> list[GpsUpdate]:
    """Issue times in [0, horizon), strictly increasing, with a random-walk position per update.

    ``deterministic`` spaces updates 1/rate apart starting at 0; ``poisson``
    draws exponential gaps (at least 1 us apart).  Arrival times and
    positions use separate substreams so changing the walk never shifts
    the arrival sequence.
    """
    if rate <= 0:
        raise ProtocolError(f"update rate must be positive, got {rate}")
    if horizon <= 0:
        return []
    times: list[int] = []
    if arrival == "deterministic":
        step = max(1, round(US_PER_S / rate))
        times = list(range(0, horizon, step))
    elif arrival == "poisson":
        gaps = rng.substream(f"arrivals:{player}")
        t = 0
        while True:
            t += max(1, round(gaps.expovariate(rate) * US_PER_S))
            if t >= horizon:
                break
            times.append(t)
    else:
        raise ProtocolError(f"unknown arrival process {arrival!r}")

    walk = rng.substream(f"walk:{player}")
    lat = ORIGIN[0] + walk.randint(-WALK_SPREAD, WALK_SPREAD)
    lon = ORIGIN[1] + walk.randint(-WALK_SPREAD, WALK_SPREAD)
    updates = []
    for t in times:
        lat += walk.randint(-WALK_STEP, WALK_STEP)
        lon += walk.randint(-WALK_STEP, WALK_STEP)
        updates.append(GpsUpdate(player, (lat, lon), t, sizes.request_bytes, sizes.response_bytes))
    return updates


@dataclass
class LocalView:
    edge: NodeId
    players: frozenset[PlayerId]
    entries: dict[PlayerId, tuple[Position, SimTime]] = field(default_factory=dict)
    dirty: set[PlayerId] = field(default_factory=set)


@dataclass
class GlobalView:
    entries: dict[PlayerId, tuple[Position, SimTime]] = field(default_factory=dict)
    last_sync: dict[NodeId, SimTime] = field(default_factory=dict)

    def positions(self) -> dict[PlayerId, Position]:
        return {p: pos for p, (pos, _) in self.entries.items()}


@dataclass(frozen=True)
class SyncDelta:
    edge: NodeId
    built_at: SimTime
    entries: tuple[tuple[PlayerId, Position, SimTime], ...]
    wire_bytes: int

    def describe(self) -> str:
        return f"edge={self.edge};entries={len(self.entries)};bytes={self.wire_bytes}"


def handle_update_edge(view: LocalView, u: GpsUpdate, served_at: SimTime) -> Response:
    if u.player not in view.players:
        raise ForeignPlayer(f"player {u.player} is not assigned to edge {view.edge}")
    view.entries[u.player] = (u.position, served_at)
    view.dirty.add(u.player)
    return Response(u.request_id, u.player, served_at, u.response_bytes)


def handle_update_cloud(view: GlobalView, u: GpsUpdate, served_at: SimTime) -> Response:
    view.entries[u.player] = (u.position, served_at)
    return Response(u.request_id, u.player, served_at, u.response_bytes)


def build_sync_delta(view: LocalView, built_at: SimTime, sizes: MessageSizes = MessageSizes()) -> SyncDelta:
    entries = tuple((p, *view.entries[p]) for p in sorted(view.dirty))
    view.dirty.clear()
    return SyncDelta(view.edge, built_at, entries, sizes.delta_bytes(len(entries)))


def apply_sync_delta(view: GlobalView, delta: SyncDelta, applied_at: SimTime) -> int:
    """Merge ``delta``; returns how many entries overwrote the global view."""
    last = view.last_sync.get(delta.edge)
    if last is not None and delta.built_at < last:
        raise StaleDelta(f"delta from edge {delta.edge} built at {delta.built_at} precedes last sync {last}")
    if applied_at < delta.built_at:
        raise StaleDelta(f"delta applied at {applied_at} before it was built at {delta.built_at}")
    written = 0
    for player, pos, last_update in delta.entries:
        current = view.entries.get(player)
        if current is None or last_update > current[1]:
            view.entries[player] = (pos, last_update)
            written += 1
    view.last_sync[delta.edge] = delta.built_at
    return written


def replay_cloud(updates: Iterable[tuple[GpsUpdate, SimTime]]) -> GlobalView:
    """Feed (update, served_at) pairs through the cloud handler in the given order."""
    view = GlobalView()
    for u, served_at in updates:
        handle_update_cloud(view, u, served_at)
    return view


def dump_view_csv(view: GlobalView | LocalView) -> str:
    lines = ["player,lat,lon,as_of_us"]
    for p in sorted(view.entries):
        (lat, lon), as_of = view.entries[p]
        lines.append(f"{p},{lat},{lon},{as_of}")
    return "\n".join(lines) + "\n"
