"""Response-time records, per-link byte counters, and fog vs cloud-only comparison."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable
from dataclasses import dataclass, field

from fogsim.engine import SimTime
from fogsim.topology import NodeId, PlayerId

LinkKey = tuple[NodeId, NodeId]


class MetricsError(ValueError):
    pass


class DuplicateRequestId(MetricsError):
    pass


class EmptyWindow(MetricsError):
    pass


class UnknownLink(MetricsError):
    pass


class MismatchedScenarios(MetricsError):
    pass


class ZeroDenominator(MetricsError):
    pass


@dataclass(frozen=True, slots=True)
class ResponseRecord:
    request_id: int
    player: PlayerId
    issued_at: SimTime
    completed_at: SimTime


def rounded_mean(total: int, count: int) -> int:
    """Integer mean, rounding halves up."""
    return (2 * total + count) // (2 * count)


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    user_count: int
    window: tuple[SimTime, SimTime]
    mean_response: int | None
    response_count: int
    dropped_count: int
    issued_count: int
    in_flight_count: int
    link_traffic: dict[LinkKey, int]
    cloud_segment_bytes: int

    def csv_rows(self) -> list[list[object]]:
        mean = "" if self.mean_response is None else self.mean_response
        head = [self.scenario, self.user_count, mean, self.response_count, self.dropped_count]
        rows = [head + ["", "", ""]]
        rows += [head + [src, dst, b] for (src, dst), b in sorted(self.link_traffic.items())]
        return rows


REPORT_HEADER = ["scenario", "users", "mean_response_us", "responses", "dropped", "link_src", "link_dst", "bytes"]


def reports_csv(reports: Iterable[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for rep in reports:
        w.writerows(rep.csv_rows())
    return buf.getvalue()


class Metrics:
    """One store per simulation run.

    ``links`` fixes the set of countable links; traffic on anything else
    raises :class:`UnknownLink`.  ``cloud_segment`` names the links whose
    bytes count as edge-cloud traffic.
    """

    def __init__(self, links: Iterable[LinkKey] | None = None, cloud_segment: Iterable[LinkKey] = ()) -> None:
        self.records: dict[int, ResponseRecord] = {}
        self.link_traffic: dict[LinkKey, int] = {k: 0 for k in links} if links is not None else {}
        self._open = links is None
        self.cloud_segment = frozenset(cloud_segment)
        self.issued: dict[int, SimTime] = {}
        self.dropped: dict[int, SimTime] = {}

    def record_issue(self, request_id: int, issued_at: SimTime) -> None:
        self.issued[request_id] = issued_at

    def record_drop(self, request_id: int, issued_at: SimTime) -> None:
        self.dropped[request_id] = issued_at

    def record_response(self, request_id: int, issued_at: SimTime, completed_at: SimTime, player: PlayerId = -1) -> None:
        if completed_at < issued_at:
            raise MetricsError(f"request {request_id} completed before it was issued")
        if request_id in self.records:
            raise DuplicateRequestId(f"request {request_id} already recorded")
        self.records[request_id] = ResponseRecord(request_id, player, issued_at, completed_at)

    def add_traffic(self, link: LinkKey, nbytes: int) -> None:
        if nbytes <= 0:
            raise MetricsError("traffic increments must be positive")
        if link not in self.link_traffic:
            if not self._open:
                raise UnknownLink(f"link {link[0]}->{link[1]} is not part of the topology")
            self.link_traffic[link] = 0
        self.link_traffic[link] += nbytes

    def mean_response_time(self, window: tuple[SimTime, SimTime]) -> int:
        lo, hi = window
        total = count = 0
        for r in self.records.values():
            if lo <= r.issued_at < hi:
                total += r.completed_at - r.issued_at
                count += 1
        if count == 0:
            raise EmptyWindow(f"no responses issued in [{lo}, {hi})")
        return rounded_mean(total, count)

    def cloud_segment_bytes(self) -> int:
        return sum(b for k, b in self.link_traffic.items() if k in self.cloud_segment)

    def report(self, scenario: str, user_count: int, window: tuple[SimTime, SimTime]) -> MetricsReport:
        lo, hi = window

        def inside(t: SimTime) -> bool:
            return lo <= t < hi

        responses = sum(1 for r in self.records.values() if inside(r.issued_at))
        dropped = sum(1 for t in self.dropped.values() if inside(t))
        issued = sum(1 for t in self.issued.values() if inside(t))
        mean = self.mean_response_time(window) if responses else None
        return MetricsReport(
            scenario=scenario,
            user_count=user_count,
            window=window,
            mean_response=mean,
            response_count=responses,
            dropped_count=dropped,
            issued_count=issued,
            in_flight_count=issued - responses - dropped,
            link_traffic=dict(self.link_traffic),
            cloud_segment_bytes=self.cloud_segment_bytes(),
        )


@dataclass(frozen=True)
class ComparisonReport:
    user_count: int
    rt_improvement_pct: float
    traffic_reduction_pct: float
    mean_cloud: int = field(default=0)
    mean_fog: int = field(default=0)
    cloud_bytes: int = field(default=0)
    fog_bytes: int = field(default=0)


def compare(cloud_report: MetricsReport, fog_report: MetricsReport) -> ComparisonReport:
    if cloud_report.user_count != fog_report.user_count or cloud_report.window != fog_report.window:
        raise MismatchedScenarios(
            f"cannot compare {cloud_report.user_count} users over {cloud_report.window} "
            f"with {fog_report.user_count} users over {fog_report.window}"
        )
    mc, mf = cloud_report.mean_response, fog_report.mean_response
    if not mc or mf is None:
        raise ZeroDenominator("cloud-only mean response time is missing or zero")
    bc, bf = cloud_report.cloud_segment_bytes, fog_report.cloud_segment_bytes
    if bc == 0:
        raise ZeroDenominator("no edge-cloud traffic in the cloud-only run")
    return ComparisonReport(
        user_count=cloud_report.user_count,
        rt_improvement_pct=100 * (mc - mf) / mc,
        traffic_reduction_pct=100 * (bc - bf) / bc,
        mean_cloud=mc,
        mean_fog=mf,
        cloud_bytes=bc,
        fog_bytes=bf,
    )
