from __future__ import annotations

import pytest

from fogsim.topology import DeviceTemplate, LinkSpec, Node, NodeKind, TopologySpec, build_topology

CLOUD, EDGE = 0, 1


def chain_spec(
    devices: int = 1,
    *,
    edges: int = 1,
    device_latency: int = 3000,
    edge_latency: int = 12000,
    edge_service: int = 26000,
    cloud_service: int = 10000,
    edge_capacity: int | None = 16,
    cloud_capacity: int | None = 32,
    assignment: str = "round_robin",
) -> TopologySpec:
    """Cloud 0 at level 2, edges 1..edges at level 1, devices from id 1000."""
    nodes = [Node(CLOUD, NodeKind.CLOUD_SERVER, 2, cloud_service, cloud_capacity)]
    links = []
    for e in range(1, edges + 1):
        nodes.append(Node(e, NodeKind.CAPABILITY_ADDED_EDGE, 1, edge_service, edge_capacity))
        links.append(LinkSpec(e, CLOUD, edge_latency))
    tmpl = DeviceTemplate(devices, tuple(range(1, edges + 1)), device_latency, assignment=assignment)
    return TopologySpec(tuple(nodes), tuple(links), devices=tmpl)


def chain(devices: int = 1, **kw):
    return build_topology(chain_spec(devices, **kw))


@pytest.fixture
def topo3():
    """1 device, 1 edge, 1 cloud."""
    return chain(1)


# -- acceptance criteria reporting ---------------------------------------------------

_criteria: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion, reported PASS/FAIL at the end")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None and rep.when == "call":
        _criteria.append((marker.args[0], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.write_sep("=", "acceptance criteria")
        for label, status in _criteria:
            terminalreporter.write_line(f"{status}  {label}")
