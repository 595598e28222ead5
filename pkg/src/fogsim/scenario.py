"""Scenario files: YAML key/value trees describing topology, workload and model.

See README.md for the full grammar.  Every key below is optional unless
marked required::

    name: default
    seed: 42                      # required, 0 <= seed < 2**64
    horizon_s: 300
    warmup_s: 0
    sync_interval_s: 1            # 0 disables synchronization
    user_counts: [1, 5, 10]
    nodes:                        # required
      - {id: 0, kind: cloud, level: 2, service_us: 10000, capacity: 32}
    links:                        # bidirectional; reverse_latency_us for asymmetry
      - {a: 1, b: 0, latency_us: 12000, bandwidth_Bps: 125000000}
    devices: {count: 10, edges: [1], latency_us: 3000, first_id: 1000, assignment: round_robin}
    workload: {rate_per_s: 5, arrival: poisson, request_bytes: 256, ...}
    model: {name: offload_cloud_to_edge}
"""

from __future__ import annotations

import dataclasses
from collections.abc import Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from fogsim.engine import SimTime, seconds
from fogsim.placement import (
    Aggregate,
    Always,
    CloudOnly,
    EdgeKindIs,
    ExecutionModel,
    Hybrid,
    OffloadCloudToEdge,
    OffloadDeviceToEdge,
    PlacementError,
    RequestLarger,
    Share,
)
from fogsim.protocol import MessageSizes
from fogsim.topology import (
    DeviceTemplate,
    LinkSpec,
    Node,
    NodeKind,
    Topology,
    TopologyError,
    TopologySpec,
    build_topology,
)

DEFAULT_USER_COUNTS = (1, 5, 10, 25, 50, 100)


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None) -> None:
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


class ValidationError(ScenarioError):
    pass


@dataclass(frozen=True)
class WorkloadSpec:
    rate: float = 5.0
    arrival: str = "poisson"
    sizes: MessageSizes = MessageSizes()
    cloud_fraction: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    topology: TopologySpec
    name: str = "scenario"
    horizon: SimTime = seconds(300)
    warmup: SimTime = 0
    workload: WorkloadSpec = WorkloadSpec()
    model: ExecutionModel = field(default_factory=OffloadCloudToEdge)
    sync_interval: SimTime = seconds(1)
    user_counts: tuple[int, ...] = DEFAULT_USER_COUNTS

    @property
    def users(self) -> int:
        return len(self.build_topology().players)

    def with_seed(self, seed: int) -> ScenarioConfig:
        return dataclasses.replace(self, seed=seed)

    def with_users(self, n: int) -> ScenarioConfig:
        """Same scenario with ``n`` generated devices (one player each)."""
        spec = self.topology
        if spec.devices is None:
            if n != self.users:
                raise ValidationError("user-count sweeps need a 'devices' template")
            return self
        return dataclasses.replace(self, topology=dataclasses.replace(spec, devices=dataclasses.replace(spec.devices, count=n)))

    def build_topology(self) -> Topology:
        return build_topology(self.topology)


# -- YAML with line numbers ---------------------------------------------------


class _Doc(dict):
    line: int = 0
    key_lines: dict[str, int]


class _Loader(yaml.SafeLoader):
    def construct_mapping(self, node: yaml.MappingNode, deep: bool = False) -> _Doc:  # type: ignore[override]
        doc = _Doc(super().construct_mapping(node, deep=True))
        doc.line = node.start_mark.line + 1
        doc.key_lines = {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}
        return doc


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _Loader.construct_mapping)


class _Reader:
    """Typed field access that reports the dotted path and line on failure."""

    def __init__(self, doc: Mapping[str, Any], path: str = "") -> None:
        if not isinstance(doc, Mapping):
            raise ParseError("expected a mapping", path or None)
        self.doc = doc
        self.path = path

    def where(self, key: str) -> tuple[str, int | None]:
        lines = getattr(self.doc, "key_lines", {})
        return (f"{self.path}.{key}" if self.path else key), lines.get(key, getattr(self.doc, "line", None))

    def fail(self, key: str, message: str, cls: type[ScenarioError] = ParseError) -> ScenarioError:
        name, line = self.where(key)
        if cls is ParseError:
            return ParseError(message, name, line)
        return cls(f"{name} (line {line}): {message}")

    def get(self, key: str, kind: type | tuple[type, ...], default: Any = ..., required: bool = False) -> Any:
        if key not in self.doc:
            if required or default is ...:
                raise self.fail(key, "missing required field")
            return default
        value = self.doc[key]
        if kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        else:
            ok = isinstance(value, kind)
        if not ok:
            raise self.fail(key, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
        return value

    def child(self, key: str, default: Any = ...) -> _Reader | None:
        value = self.get(key, Mapping, default)
        return None if value is None else _Reader(value, self.where(key)[0])

    def items(self, key: str, default: Any = ...) -> list[_Reader]:
        values = self.get(key, list, default)
        name = self.where(key)[0]
        return [_Reader(v, f"{name}[{i}]") for i, v in enumerate(values or [])]

    def optional_int(self, key: str) -> int | None:
        value = self.get(key, (int, str, type(None)), None)
        if value is None or value == "unbounded":
            return None
        if not isinstance(value, int):
            raise self.fail(key, f"expected an integer or 'unbounded', got {value!r}")
        return value


def _kind(r: _Reader, key: str) -> NodeKind:
    raw = r.get(key, str)
    try:
        return NodeKind(raw)
    except ValueError:
        names = ", ".join(k.value for k in NodeKind)
        raise r.fail(key, f"unknown node kind {raw!r} (one of {names})") from None


def _seconds(r: _Reader, key: str, default: float) -> SimTime:
    value = r.get(key, float, default)
    if value < 0:
        raise r.fail(key, "must be non-negative", ValidationError)
    return seconds(value)


def parse_model(r: _Reader) -> ExecutionModel:
    name = r.get("name", str, required=True)
    try:
        if name == "cloud_only":
            return CloudOnly()
        if name == "offload_device_to_edge":
            return OffloadDeviceToEdge()
        if name == "offload_cloud_to_edge":
            return OffloadCloudToEdge()
        if name == "aggregate":
            return Aggregate(r.get("filter_ratio", float, 0.0), _seconds(r, "batch_window_s", 1.0))
        if name == "share":
            return Share(r.get("policy", str, "round_robin"))
        if name == "hybrid":
            rules = []
            for rule in r.items("rules"):
                if "if_request_bytes_over" in rule.doc:
                    pred: Any = RequestLarger(rule.get("if_request_bytes_over", int))
                elif "if_edge_kind" in rule.doc:
                    pred = EdgeKindIs(_kind(rule, "if_edge_kind"))
                else:
                    pred = Always()
                sub = rule.child("model")
                assert sub is not None
                rules.append((pred, parse_model(sub)))
            return Hybrid(tuple(rules))
    except PlacementError as exc:
        raise r.fail("name", str(exc), ValidationError) from None
    raise r.fail("name", f"unknown execution model {name!r}")


def _model_leaves(model: ExecutionModel) -> list[ExecutionModel]:
    if isinstance(model, Hybrid):
        return [leaf for _, m in model.rules for leaf in _model_leaves(m)]
    return [model]


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ParseError(f"{source}: {exc.problem}", None, line) from None
    if not isinstance(doc, Mapping):
        raise ParseError(f"{source}: top level must be a mapping")
    r = _Reader(doc)

    seed = r.get("seed", int, required=True)
    if not 0 <= seed < 2**64:
        raise r.fail("seed", "must be a 64-bit unsigned integer", ValidationError)
    horizon = _seconds(r, "horizon_s", 300)
    warmup = _seconds(r, "warmup_s", 0)
    if not horizon > warmup >= 0:
        raise r.fail("horizon_s", "horizon must exceed warmup", ValidationError)

    try:
        nodes = []
        assignments = {}
        players = {}
        for n in r.items("nodes"):
            kind = _kind(n, "kind")
            level = n.get("level", int, 0 if kind is NodeKind.USER_DEVICE else ...)
            nodes.append(
                Node(
                    n.get("id", int),
                    kind,
                    level,
                    n.get("service_us", int, 0),
                    n.optional_int("capacity"),
                    n.optional_int("max_queue"),
                )
            )
            if kind is NodeKind.USER_DEVICE:
                if "edge" in n.doc:
                    assignments[nodes[-1].id] = n.get("edge", int)
                if "player" in n.doc:
                    players[n.get("player", int)] = nodes[-1].id
        links = []
        for ln in r.items("links", []):
            links.append(
                LinkSpec(
                    ln.get("a", int),
                    ln.get("b", int),
                    ln.get("latency_us", int),
                    ln.optional_int("reverse_latency_us"),
                    ln.optional_int("bandwidth_Bps"),
                )
            )
        devices = None
        d = r.child("devices", None)
        if d is not None:
            devices = DeviceTemplate(
                count=d.get("count", int, 0),
                edges=tuple(d.get("edges", list)),
                latency=d.get("latency_us", int),
                first_id=d.get("first_id", int, 1000),
                reverse_latency=d.optional_int("reverse_latency_us"),
                bandwidth=d.optional_int("bandwidth_Bps"),
                assignment=d.get("assignment", str, "round_robin"),
            )
            if devices.count < 0:
                raise d.fail("count", "must be non-negative", ValidationError)
            if devices.assignment not in ("round_robin", "block"):
                raise d.fail("assignment", "must be round_robin or block", ValidationError)
        topo_spec = TopologySpec(tuple(nodes), tuple(links), assignments, players or None, devices)
    except TopologyError as exc:
        raise ValidationError(f"{source}: {exc}") from None

    w = r.child("workload", None) or _Reader({}, "workload")
    base = MessageSizes()
    sizes = MessageSizes(
        w.get("request_bytes", int, base.request_bytes),
        w.get("response_bytes", int, base.response_bytes),
        w.get("header_bytes", int, base.header_bytes),
        w.get("per_entry_bytes", int, base.per_entry_bytes),
    )
    for key in ("request_bytes", "response_bytes"):
        if getattr(sizes, key) <= 0:
            raise w.fail(key, "must be positive", ValidationError)
    for key in ("header_bytes", "per_entry_bytes"):
        if getattr(sizes, key) < 0:
            raise w.fail(key, "must be non-negative", ValidationError)
    rate = w.get("rate_per_s", float, 5.0)
    if rate <= 0:
        raise w.fail("rate_per_s", "must be positive", ValidationError)
    arrival = w.get("arrival", str, "poisson")
    if arrival not in ("poisson", "deterministic"):
        raise w.fail("arrival", "must be poisson or deterministic", ValidationError)
    cloud_fraction = w.get("cloud_fraction", float, 0.0)
    if not 0 <= cloud_fraction <= 1:
        raise w.fail("cloud_fraction", "must lie in [0, 1]", ValidationError)
    workload = WorkloadSpec(rate, arrival, sizes, cloud_fraction)

    m = r.child("model", None)
    model = parse_model(m) if m is not None else OffloadCloudToEdge()
    for leaf in _model_leaves(model):
        if isinstance(leaf, (Aggregate, Share)):
            raise ValidationError(
                f"{source}: model '{type(leaf).__name__}' applies to sensor/task workloads, "
                "not the game workload; use cloud_only, offload_* or hybrid"
            )

    counts = r.get("user_counts", list, list(DEFAULT_USER_COUNTS))
    if not counts or not all(isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in counts):
        raise r.fail("user_counts", "must be a non-empty list of non-negative integers", ValidationError)

    config = ScenarioConfig(
        seed=seed,
        topology=topo_spec,
        name=r.get("name", str, "scenario"),
        horizon=horizon,
        warmup=warmup,
        workload=workload,
        model=model,
        sync_interval=_seconds(r, "sync_interval_s", 1.0),
        user_counts=tuple(counts),
    )
    validate_scenario(config, source)
    return config


def validate_scenario(config: ScenarioConfig, source: str = "<scenario>") -> None:
    try:
        config.build_topology()
        if config.topology.devices is not None:
            for n in config.user_counts:
                config.with_users(n).build_topology()
    except TopologyError as exc:
        raise ValidationError(f"{source}: {type(exc).__name__}: {exc}") from None


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        if path.name == str(path) and path.name.endswith(".scenario"):
            bundled = resources.files("fogsim.data") / path.name
            if bundled.is_file():
                return parse_scenario(bundled.read_text(encoding="utf-8"), path.name)
        raise
    return parse_scenario(text, str(path))


def default_scenario_text() -> str:
    return (resources.files("fogsim.data") / "default.scenario").read_text(encoding="utf-8")
