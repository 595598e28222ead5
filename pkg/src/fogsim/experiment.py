"""Paired cloud-only / fog runs over a user-count sweep, and their CSV reports."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from fogsim.engine import Event, trace_csv
from fogsim.metrics import ComparisonReport, MetricsReport, compare, reports_csv
from fogsim.placement import CloudOnly
from fogsim.scenario import ScenarioConfig
from fogsim.simulation import GameSimulation, workload_updates


@dataclass
class RunPair:
    users: int
    cloud: MetricsReport
    fog: MetricsReport
    comparison: ComparisonReport
    cloud_trace: list[Event] | None = None
    fog_trace: list[Event] | None = None


@dataclass
class ExperimentResult:
    scenario: str
    seed: int
    runs: dict[int, RunPair]


def build_runs(config: ScenarioConfig, users: int) -> tuple[GameSimulation, GameSimulation]:
    """Unrun cloud-only and fog simulations sharing one arrival sequence."""
    cfg = config.with_users(users)
    topo = cfg.build_topology()
    wl = cfg.workload
    updates = workload_updates(topo, cfg.seed, wl.rate, cfg.horizon, wl.arrival, wl.sizes)
    common = dict(horizon=cfg.horizon, warmup=cfg.warmup, sizes=wl.sizes, seed=cfg.seed)
    cloud = GameSimulation(topo, updates, CloudOnly(), sync_interval=0, scenario="cloud", **common)
    fog = GameSimulation(
        topo, updates, cfg.model, sync_interval=cfg.sync_interval, cloud_fraction=wl.cloud_fraction,
        scenario="fog", **common,
    )
    return cloud, fog


def run_pair(config: ScenarioConfig, users: int, keep_trace: bool = False) -> RunPair:
    cloud, fog = build_runs(config, users)
    cloud.run()
    fog.run()
    rc, rf = cloud.report(), fog.report()
    return RunPair(
        users, rc, rf, compare(rc, rf),
        cloud.engine.trace if keep_trace else None,
        fog.engine.trace if keep_trace else None,
    )


def _run_pair_args(args: tuple[ScenarioConfig, int, bool]) -> RunPair:
    return run_pair(*args)


def run_experiment(
    config: ScenarioConfig, user_counts: list[int] | None = None, keep_trace: bool = False, jobs: int = 1
) -> ExperimentResult:
    counts = list(dict.fromkeys(user_counts if user_counts is not None else config.user_counts))
    work = [(config, n, keep_trace) for n in counts]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(_run_pair_args, work))
    else:
        pairs = [_run_pair_args(w) for w in work]
    return ExperimentResult(config.name, config.seed, {p.users: p for p in pairs})


SUMMARY_HEADER = [
    "users",
    "cloud_mean_response_us",
    "fog_mean_response_us",
    "rt_improvement_pct",
    "cloud_edgecloud_bytes",
    "fog_edgecloud_bytes",
    "traffic_reduction_pct",
    "cloud_responses",
    "fog_responses",
    "cloud_dropped",
    "fog_dropped",
]


def summary_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for n in sorted(result.runs):
        p = result.runs[n]
        c = p.comparison
        w.writerow([
            n, c.mean_cloud, c.mean_fog, f"{c.rt_improvement_pct:.4f}",
            c.cloud_bytes, c.fog_bytes, f"{c.traffic_reduction_pct:.4f}",
            p.cloud.response_count, p.fog.response_count, p.cloud.dropped_count, p.fog.dropped_count,
        ])
    return buf.getvalue()


def write_reports(result: ExperimentResult, out_dir: str | Path) -> list[Path]:
    """Write summary.csv, links_<n>.csv and (when traces were kept) trace_<n>_{cloud,fog}.csv."""
    if not result.runs:
        raise ValueError("experiment result is empty; nothing to write")
    files: dict[str, str] = {"summary.csv": summary_csv(result)}
    for n in sorted(result.runs):
        p = result.runs[n]
        files[f"links_{n}.csv"] = reports_csv([p.cloud, p.fog])
        if p.cloud_trace is not None and p.fog_trace is not None:
            files[f"trace_{n}_cloud.csv"] = trace_csv(p.cloud_trace)
            files[f"trace_{n}_fog.csv"] = trace_csv(p.fog_trace)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text, encoding="utf-8", newline="")
        written.append(path)
    return written
