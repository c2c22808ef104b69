"""Scenario configuration: a single JSON document describing nodes, links,
timers, security parameters and scheduled faults.

Parsing is strict: unknown keys are rejected and every violation is reported
with its field path. A config round-trips: parse -> serialize -> parse gives
an identical value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .model import CMU_ID, SimError
from .kernel import FaultKind, FaultSpec, LinkModel, LinkSpec
from .security import ProfileKind, SecurityProfile


class ScenarioError(SimError):
    """Carries every violation found in one parse, with field paths."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


PROFILE_NAMES = tuple(p.value for p in ProfileKind)
FAULT_NAMES = tuple(k.value for k in FaultKind)


@dataclass(frozen=True)
class NodeSpec:
    id: int
    hardware_id: int
    processing_power: int
    x: float | None = None
    y: float | None = None
    registered: bool = True


@dataclass(frozen=True)
class LinkOverride:
    src: int
    dst: int
    latency_ms: int
    jitter_ms: int
    loss_probability: float


@dataclass(frozen=True)
class LinksConfig:
    latency_ms: int = 10
    jitter_ms: int = 0
    loss_probability: float = 0.0
    overrides: tuple[LinkOverride, ...] = ()


@dataclass(frozen=True)
class TimersConfig:
    status_period_ms: int = 5000
    sensor_data_period_ms: int = 10000
    inspection_period_ms: int = 30000
    rtt_timeout_ms: int = 2000


@dataclass(frozen=True)
class SecurityConfig:
    profile: str = "plain"
    # Overhead constants are calibrated so a standard seven-node run lands at
    # roughly 4x total wire bytes for auth-encap over plain and 3x over auth:
    # per data packet, (120 + 40 + 320) / 120 = 4.0 and 480 / 160 = 3.0.
    sig_len: int = 40
    encap_overhead: int = 320
    handshake_msgs: int = 2
    handshake_msg_len: int = 64
    tota_time_step_ms: int = 30000
    tota_skew_steps: int = 1
    payload_sensor_data: int = 120
    payload_status_broadcast: int = 120


@dataclass(frozen=True)
class FaultEntry:
    target: int
    kind: str
    at_ms: int
    n: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    duration_ms: int
    description: str = ""
    nodes: tuple[NodeSpec, ...] = ()
    links: LinksConfig = LinksConfig()
    timers: TimersConfig = TimersConfig()
    security: SecurityConfig = SecurityConfig()
    faults: tuple[FaultEntry, ...] = ()

    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    def security_profile(self, override: Optional[str] = None) -> SecurityProfile:
        name = override or self.security.profile
        kind = ProfileKind(name)
        if kind is ProfileKind.PLAIN:
            return SecurityProfile.plain()
        if kind is ProfileKind.AUTH:
            return SecurityProfile.auth_only(sig_len=self.security.sig_len)
        return SecurityProfile.auth_encap(
            sig_len=self.security.sig_len,
            encap_overhead=self.security.encap_overhead,
            handshake_msgs=self.security.handshake_msgs,
            handshake_msg_len=self.security.handshake_msg_len)

    def link_model(self) -> LinkModel:
        default = LinkSpec(latency_ms=self.links.latency_ms,
                           jitter_ms=self.links.jitter_ms,
                           loss_probability=self.links.loss_probability)
        overrides = {}
        for ov in self.links.overrides:
            overrides[(ov.src, ov.dst)] = LinkSpec(
                latency_ms=ov.latency_ms, jitter_ms=ov.jitter_ms,
                loss_probability=ov.loss_probability)
        return LinkModel(default, overrides)

    def fault_specs(self) -> list[FaultSpec]:
        return [FaultSpec(target=f.target, kind=FaultKind(f.kind),
                          at=f.at_ms, n=f.n)
                for f in self.faults]


# --------------------------------------------------------------------- parse

class _Reader:
    """Dict reader that records errors with paths and flags unknown keys."""

    def __init__(self, data: dict, path: str, errors: list[str]):
        self.data = data
        self.path = path
        self.errors = errors
        self.seen: set[str] = set()

    def err(self, key: str, message: str) -> None:
        where = f"{self.path}.{key}" if self.path else key
        self.errors.append(f"{where}: {message}")

    def take(self, key: str, kind, default=..., required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                self.err(key, "required field is missing")
                return None if default is ... else default
            return None if default is ... else default
        value = self.data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, bool):
            self.err(key, "expected an integer, got a boolean")
            return None if default is ... else default
        if not isinstance(value, kind):
            self.err(key, f"expected {kind.__name__}, got {type(value).__name__}")
            return None if default is ... else default
        return value

    def finish(self) -> None:
        for key in self.data:
            if key not in self.seen:
                self.err(key, "unknown key")


def _parse_node(data: Any, idx: int, errors: list[str]) -> Optional[NodeSpec]:
    path = f"nodes[{idx}]"
    if not isinstance(data, dict):
        errors.append(f"{path}: expected an object")
        return None
    r = _Reader(data, path, errors)
    nid = r.take("id", int, required=True)
    hw = r.take("hardware_id", int, required=True)
    power = r.take("processing_power", int, required=True)
    x = r.take("x", float, default=None)
    y = r.take("y", float, default=None)
    registered = r.take("registered", bool, default=True)
    r.finish()
    if nid is None or hw is None or power is None:
        return None
    if nid < 1:
        r.err("id", f"node ids start at 1 (id 0 is reserved), got {nid}")
    if power <= 0:
        r.err("processing_power", f"must be > 0, got {power}")
    if errors:
        pass
    return NodeSpec(id=nid, hardware_id=hw, processing_power=power,
                    x=x, y=y, registered=bool(registered))


def _parse_links(data: Any, errors: list[str],
                 node_ids: set[int]) -> LinksConfig:
    if data is None:
        return LinksConfig()
    if not isinstance(data, dict):
        errors.append("links: expected an object")
        return LinksConfig()
    r = _Reader(data, "links", errors)
    latency = r.take("latency_ms", int, default=10)
    jitter = r.take("jitter_ms", int, default=0)
    loss = r.take("loss_probability", float, default=0.0)
    raw_overrides = r.take("overrides", list, default=[])
    r.finish()
    if latency < 0:
        r.err("latency_ms", "must be >= 0")
    if jitter < 0:
        r.err("jitter_ms", "must be >= 0")
    if not 0.0 <= loss <= 1.0:
        r.err("loss_probability", f"must be within [0, 1], got {loss}")
    overrides = []
    for i, item in enumerate(raw_overrides):
        path = f"links.overrides[{i}]"
        if not isinstance(item, dict):
            errors.append(f"{path}: expected an object")
            continue
        ro = _Reader(item, path, errors)
        src = ro.take("src", int, required=True)
        dst = ro.take("dst", int, required=True)
        olat = ro.take("latency_ms", int, default=latency)
        ojit = ro.take("jitter_ms", int, default=jitter)
        oloss = ro.take("loss_probability", float, default=loss)
        ro.finish()
        if src is None or dst is None:
            continue
        for label, endpoint in (("src", src), ("dst", dst)):
            if endpoint != CMU_ID and endpoint not in node_ids:
                ro.err(label, f"unknown node id {endpoint}")
        if not 0.0 <= oloss <= 1.0:
            ro.err("loss_probability", f"must be within [0, 1], got {oloss}")
        overrides.append(LinkOverride(src=src, dst=dst, latency_ms=olat,
                                     jitter_ms=ojit, loss_probability=oloss))
    return LinksConfig(latency_ms=latency, jitter_ms=jitter,
                       loss_probability=loss, overrides=tuple(overrides))


def _parse_timers(data: Any, errors: list[str]) -> TimersConfig:
    if data is None:
        return TimersConfig()
    if not isinstance(data, dict):
        errors.append("timers: expected an object")
        return TimersConfig()
    r = _Reader(data, "timers", errors)
    d = TimersConfig()
    values = {}
    for name, default in (("status_period_ms", d.status_period_ms),
                          ("sensor_data_period_ms", d.sensor_data_period_ms),
                          ("inspection_period_ms", d.inspection_period_ms),
                          ("rtt_timeout_ms", d.rtt_timeout_ms)):
        value = r.take(name, int, default=default)
        if value <= 0:
            r.err(name, f"must be > 0, got {value}")
        values[name] = value
    r.finish()
    return TimersConfig(**values)


def _parse_security(data: Any, errors: list[str]) -> SecurityConfig:
    if data is None:
        return SecurityConfig()
    if not isinstance(data, dict):
        errors.append("security: expected an object")
        return SecurityConfig()
    r = _Reader(data, "security", errors)
    d = SecurityConfig()
    profile = r.take("profile", str, default=d.profile)
    if profile not in PROFILE_NAMES:
        r.err("profile", f"must be one of {list(PROFILE_NAMES)}, got {profile!r}")
        profile = d.profile
    values = {}
    for name, default in (("sig_len", d.sig_len),
                          ("encap_overhead", d.encap_overhead),
                          ("handshake_msgs", d.handshake_msgs),
                          ("handshake_msg_len", d.handshake_msg_len),
                          ("tota_time_step_ms", d.tota_time_step_ms),
                          ("tota_skew_steps", d.tota_skew_steps),
                          ("payload_sensor_data", d.payload_sensor_data),
                          ("payload_status_broadcast", d.payload_status_broadcast)):
        value = r.take(name, int, default=default)
        if value < 0:
            r.err(name, f"must be >= 0, got {value}")
        values[name] = value
    r.finish()
    if values["tota_time_step_ms"] <= 0:
        r.err("tota_time_step_ms", "must be > 0")
    for name in ("payload_sensor_data", "payload_status_broadcast"):
        if values[name] <= 0:
            r.err(name, "must be > 0")
    return SecurityConfig(profile=profile, **values)


def _parse_fault(data: Any, idx: int, errors: list[str],
                 node_ids: set[int]) -> Optional[FaultEntry]:
    path = f"faults[{idx}]"
    if not isinstance(data, dict):
        errors.append(f"{path}: expected an object")
        return None
    r = _Reader(data, path, errors)
    target = r.take("target", int, required=True)
    kind = r.take("kind", str, required=True)
    at_ms = r.take("at_ms", int, required=True)
    n = r.take("n", int, default=0)
    r.finish()
    if target is None or kind is None or at_ms is None:
        return None
    if kind not in FAULT_NAMES:
        r.err("kind", f"must be one of {list(FAULT_NAMES)}, got {kind!r}")
        return None
    if target not in node_ids:
        r.err("target", f"unknown node id {target}")
    if at_ms < 0:
        r.err("at_ms", "must be >= 0")
    if kind == FaultKind.DROP_NEXT_N.value and n <= 0:
        r.err("n", "drop_next_n requires n > 0")
    return FaultEntry(target=target, kind=kind, at_ms=at_ms, n=n)


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse one JSON scenario document, collecting every violation."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"document: invalid JSON ({exc})"]) from exc
    if not isinstance(data, dict):
        raise ScenarioError(["document: expected a JSON object"])

    errors: list[str] = []
    r = _Reader(data, "", errors)
    name = r.take("name", str, required=True)
    description = r.take("description", str, default="")
    seed = r.take("seed", int, required=True)
    duration = r.take("duration_ms", int, required=True)
    raw_nodes = r.take("nodes", list, required=True)
    raw_links = r.take("links", dict, default=None)
    raw_timers = r.take("timers", dict, default=None)
    raw_security = r.take("security", dict, default=None)
    raw_faults = r.take("faults", list, default=[])
    r.finish()

    if seed is not None and not 0 <= seed < 2 ** 64:
        r.err("seed", "must fit in an unsigned 64-bit integer")
    if duration is not None and duration <= 0:
        r.err("duration_ms", "must be > 0")

    nodes: list[NodeSpec] = []
    if raw_nodes is not None:
        if not raw_nodes:
            errors.append("nodes: at least one node is required")
        for i, item in enumerate(raw_nodes):
            node = _parse_node(item, i, errors)
            if node is not None:
                nodes.append(node)
        by_id: dict[int, int] = {}
        for i, node in enumerate(nodes):
            if node.id in by_id:
                errors.append(
                    f"nodes[{i}].id: duplicate of nodes[{by_id[node.id]}].id "
                    f"(id {node.id})")
            else:
                by_id[node.id] = i

    node_ids = {n.id for n in nodes}
    links = _parse_links(raw_links, errors, node_ids)
    timers = _parse_timers(raw_timers, errors)
    security = _parse_security(raw_security, errors)

    faults: list[FaultEntry] = []
    if raw_faults is not None:
        for i, item in enumerate(raw_faults):
            entry = _parse_fault(item, i, errors, node_ids)
            if entry is not None:
                faults.append(entry)

    # Missed-packet detection needs the grace window (a quarter period) to
    # exceed the one-way latency, otherwise in-flight packets are flagged.
    min_period = min(timers.status_period_ms, timers.sensor_data_period_ms)
    max_latency = links.latency_ms + links.jitter_ms
    for ov in links.overrides:
        max_latency = max(max_latency, ov.latency_ms + ov.jitter_ms)
    if max_latency >= min_period // 4:
        errors.append(
            "links.latency_ms: latency plus jitter must stay below a quarter "
            f"of the shortest period ({min_period // 4} ms)")

    if errors:
        raise ScenarioError(errors)
    return ScenarioConfig(name=name, description=description, seed=seed,
                          duration_ms=duration, nodes=tuple(nodes),
                          links=links, timers=timers, security=security,
                          faults=tuple(faults))


# ----------------------------------------------------------------- serialize

def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "name": cfg.name,
        "description": cfg.description,
        "seed": cfg.seed,
        "duration_ms": cfg.duration_ms,
        "nodes": [
            {k: v for k, v in (("id", n.id),
                               ("hardware_id", n.hardware_id),
                               ("processing_power", n.processing_power),
                               ("x", n.x), ("y", n.y),
                               ("registered", n.registered))
             if v is not None}
            for n in cfg.nodes
        ],
        "links": {
            "latency_ms": cfg.links.latency_ms,
            "jitter_ms": cfg.links.jitter_ms,
            "loss_probability": cfg.links.loss_probability,
            "overrides": [
                {"src": o.src, "dst": o.dst, "latency_ms": o.latency_ms,
                 "jitter_ms": o.jitter_ms, "loss_probability": o.loss_probability}
                for o in cfg.links.overrides
            ],
        },
        "timers": {
            "status_period_ms": cfg.timers.status_period_ms,
            "sensor_data_period_ms": cfg.timers.sensor_data_period_ms,
            "inspection_period_ms": cfg.timers.inspection_period_ms,
            "rtt_timeout_ms": cfg.timers.rtt_timeout_ms,
        },
        "security": {
            "profile": cfg.security.profile,
            "sig_len": cfg.security.sig_len,
            "encap_overhead": cfg.security.encap_overhead,
            "handshake_msgs": cfg.security.handshake_msgs,
            "handshake_msg_len": cfg.security.handshake_msg_len,
            "tota_time_step_ms": cfg.security.tota_time_step_ms,
            "tota_skew_steps": cfg.security.tota_skew_steps,
            "payload_sensor_data": cfg.security.payload_sensor_data,
            "payload_status_broadcast": cfg.security.payload_status_broadcast,
        },
        "faults": [
            {k: v for k, v in (("target", f.target), ("kind", f.kind),
                               ("at_ms", f.at_ms), ("n", f.n))
             if not (k == "n" and f.kind != FaultKind.DROP_NEXT_N.value)}
            for f in cfg.faults
        ],
    }


def scenario_to_json(cfg: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(cfg), indent=2) + "\n"


# --------------------------------------------------------------------- load

def builtin_scenario_names() -> list[str]:
    root = resources.files("ansim").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name: str) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled scenario name."""
    path = Path(path_or_name)
    if path.exists():
        return parse_scenario(path.read_text())
    bundled = resources.files("ansim").joinpath(
        "scenarios", f"{path_or_name}.json")
    if bundled.is_file():
        return parse_scenario(bundled.read_text())
    raise ScenarioError(
        [f"scenario: no such file or bundled scenario {path_or_name!r} "
         f"(bundled: {', '.join(builtin_scenario_names())})"])
