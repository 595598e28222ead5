from __future__ import annotations

import csv

import pytest

from fogsim.cli import main
from fogsim.experiment import ExperimentResult, run_experiment, write_reports
from fogsim.scenario import parse_scenario

SMALL = """
name: small
seed: 5
horizon_s: 4
user_counts: [1, 2, 3]
nodes:
  - {id: 0, kind: cloud, level: 2, service_us: 10000, capacity: 32}
  - {id: 1, kind: capability_edge, level: 1, service_us: 26000, capacity: 16}
links:
  - {a: 1, b: 0, latency_us: 12000}
devices: {count: 2, edges: [1], latency_us: 3000}
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.scenario"
    path.write_text(SMALL)
    return path


def test_sweep_writes_summary_and_links(small, tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", str(small), "--out", str(out)]) == 0
    rows = list(csv.reader((out / "summary.csv").open()))
    assert len(rows) == 4
    assert rows[0][:4] == ["users", "cloud_mean_response_us", "fog_mean_response_us", "rt_improvement_pct"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    for n in (1, 2, 3):
        assert (out / f"links_{n}.csv").exists()
    assert not list(out.glob("trace_*"))


def test_rerun_is_byte_identical(small, tmp_path):
    main(["sweep", str(small), "--out", str(tmp_path / "a"), "--trace"])
    main(["sweep", str(small), "--out", str(tmp_path / "b"), "--trace", "--jobs", "2"])
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "trace_2_fog.csv" in names
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(small, tmp_path):
    main(["run", str(small), "--out", str(tmp_path / "a")])
    main(["run", str(small), "--out", str(tmp_path / "b"), "--seed", "6"])
    a = (tmp_path / "a" / "links_2.csv").read_text()
    b = (tmp_path / "b" / "links_2.csv").read_text()
    assert a != b


def test_run_uses_device_count(small, tmp_path):
    main(["run", str(small), "--out", str(tmp_path)])
    assert len((tmp_path / "summary.csv").read_text().splitlines()) == 2


def test_exit_codes(tmp_path, small):
    bad = tmp_path / "bad.scenario"
    bad.write_text(SMALL.replace("latency_us: 12000", "latency_us: -1"))
    assert main(["sweep", str(bad), "--out", str(tmp_path / "x")]) == 1
    assert main(["sweep", str(tmp_path / "nope.scenario"), "--out", str(tmp_path / "x")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", str(small), "--out", str(blocker / "sub")]) == 2


def test_empty_result_writes_nothing(tmp_path):
    with pytest.raises(ValueError):
        write_reports(ExperimentResult("x", 1, {}), tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_experiment_result_has_each_count_once():
    cfg = parse_scenario(SMALL)
    result = run_experiment(cfg, [2, 1, 2])
    assert sorted(result.runs) == [1, 2]
    for n, pair in result.runs.items():
        assert pair.cloud.user_count == pair.fog.user_count == n


def test_sweep_traffic_monotone_in_users():
    cfg = parse_scenario(SMALL)
    result = run_experiment(cfg, [1, 2, 3, 5])
    counts = sorted(result.runs)
    for scenario in ("cloud", "fog"):
        for lo, hi in zip(counts, counts[1:]):
            a = getattr(result.runs[lo], scenario).link_traffic
            b = getattr(result.runs[hi], scenario).link_traffic
            assert all(b.get(k, 0) >= v for k, v in a.items())
