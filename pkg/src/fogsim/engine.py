"""Deterministic discrete-event core.

Events are ordered by ``(time, seq)`` where ``seq`` is a global insertion
counter, so simultaneous events run in the order they were scheduled.
Randomness comes from :class:`Rng`, a seeded Mersenne Twister with named
substreams; the same seed always yields the same trace.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import random
from collections.abc import Callable
from typing import Any, NamedTuple

SimTime = int

US_PER_S = 1_000_000


def seconds(value: float) -> SimTime:
    """Convert seconds to integer microseconds (round half to even)."""
    return int(round(value * US_PER_S))


class EventKind(enum.Enum):
    MESSAGE_ARRIVAL = "MessageArrival"
    SERVICE_COMPLETE = "ServiceComplete"
    SYNC_TIMER = "SyncTimer"
    REQUEST_ISSUE = "RequestIssue"
    MEASUREMENT_END = "MeasurementEnd"


class Event(NamedTuple):
    """Heap entry and trace record; tuple order makes heaps sort by (time, seq)."""

    time: SimTime
    seq: int
    kind: EventKind
    node: int | None = None
    payload: Any = None

    def detail(self) -> str:
        if self.payload is None:
            return ""
        describe = getattr(self.payload, "describe", None)
        return describe() if describe is not None else str(self.payload)

    def row(self) -> tuple[int, int, str, str, str]:
        return (self.time, self.seq, self.kind.value, "" if self.node is None else str(self.node), self.detail())


class EngineError(RuntimeError):
    pass


class TimeTravel(EngineError):
    pass


class HandlerFault(EngineError):
    def __init__(self, event: Event, trace: list[Event], cause: BaseException) -> None:
        super().__init__(f"handler for {event.kind.value} at t={event.time} failed: {cause!r}")
        self.event = event
        self.trace = trace
        self.__cause__ = cause


class Rng:
    """Seeded generator; ``substream(label)`` gives an independent, reproducible stream."""

    def __init__(self, seed: int) -> None:
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._gen = random.Random(seed)

    def substream(self, label: str) -> Rng:
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._gen = random.Random(f"{self.seed}:{label}")
        return child

    def random(self) -> float:
        return self._gen.random()

    def expovariate(self, rate: float) -> float:
        return self._gen.expovariate(rate)

    def randint(self, a: int, b: int) -> int:
        return self._gen.randint(a, b)


Handler = Callable[[Event], None]


class Engine:
    def __init__(self) -> None:
        self._queue: list[Event] = []
        self._seq = 0
        self._now: SimTime = 0
        self._handlers: dict[EventKind, Handler] = {}
        self._stopped = False
        self.trace: list[Event] = []

    def now(self) -> SimTime:
        return self._now

    def on(self, kind: EventKind, handler: Handler) -> None:
        self._handlers[kind] = handler

    def schedule(self, time: SimTime, kind: EventKind, node: int | None = None, payload: Any = None) -> Event:
        if time < self._now:
            raise TimeTravel(f"cannot schedule {kind.value} at {time} < now {self._now}")
        ev = Event(time, self._seq, kind, node, payload)
        self._seq += 1
        # seq is unique, so heap comparisons never reach kind/payload
        heapq.heappush(self._queue, ev)
        return ev

    def stop(self) -> None:
        """Called from a handler: end the current run after this event."""
        self._stopped = True

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t_end: SimTime) -> list[Event]:
        """Process every event with time <= t_end; returns the events processed by this call."""
        if t_end < self._now:
            raise TimeTravel(f"t_end {t_end} is before now {self._now}")
        queue = self._queue
        handlers = self._handlers
        trace = self.trace
        start = len(trace)
        pop = heapq.heappop
        self._stopped = False
        while queue and queue[0][0] <= t_end:
            ev = pop(queue)
            self._now = ev.time
            trace.append(ev)
            handler = handlers.get(ev.kind)
            if handler is not None:
                try:
                    handler(ev)
                except Exception as exc:
                    raise HandlerFault(ev, trace[start:-1], exc) from exc
            if self._stopped:
                return trace[start:]
        self._now = t_end
        return trace[start:]


def trace_csv(trace: list[Event]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time_us", "seq", "kind", "node", "detail"])
    writer.writerows(ev.row() for ev in trace)
    return buf.getvalue()
