"""Scenario files: plain-text (YAML) descriptions of a reproducible run.

A scenario names the world, the network conditions, the agent roster, a
scripted timeline of operator actions and fault injections, and the
assertions that must hold. Identical (scenario, seed) pairs produce
byte-identical event logs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from fleetmux.errors import ScenarioParseError
from fleetmux.netsim import NetConfig
from fleetmux.protocol import AgentRecord, Capabilities
from fleetmux.protocol.messages import MODE_NAMES

SCENARIO_VERSION = 1

ALL_ROBOT_MODES = tuple(MODE_NAMES)

TIMELINE_ACTIONS = {
    "select": {"base", "robots"},
    "request_control": {"base", "robot"},
    "release_control": {"base", "robot"},
    "set_mode": {"base", "robot", "mode"},
    "teleop": {"base", "robot", "fwd", "turn"},
    "waypoint_cmd": {"base", "robot", "goal"},
    "start_convoy": {"base", "order"},
    "stop_convoy": {"base", "robot"},
    "peeloff": {"base", "robot"},
    "restart_node": {"base", "robot", "node"},
    "kill_node": {"robot", "node"},
    "set_battery": {"robot", "ok"},
    "silence": {"agent", "until"},
    "fuzz_lock": {"bases", "robots", "count"},
    "raw": {"base", "type", "body", "dst"},
}

ASSERTION_NAMES = {
    "zero_lock_violations",
    "mux_exclusive",
    "converged_within",
    "expired",
    "spacing_band",
    "zero_collisions",
    "min_separation",
    "coverage_min",
    "exploration_done",
    "goals_on_trail",
    "monotone_mapping",
    "final_mode",
    "no_decode_errors",
}


@dataclass
class AgentSpec:
    id: str
    kind: str
    platform: str = "simulated"
    start: tuple[float, float, float] = (1.0, 1.0, 0.0)
    modes: tuple = ALL_ROBOT_MODES
    services: tuple = ("map",)
    auto_restart: bool = False

    def record(self) -> AgentRecord:
        caps = Capabilities(
            kind=self.kind,
            platform=self.platform,
            modes=self.modes if self.kind == "robot" else (),
            services=self.services if self.kind == "robot" else (),
        )
        return AgentRecord(self.id, caps)


@dataclass
class Scenario:
    name: str
    seed: int
    ticks: int
    tick_ms: int
    world_text: str
    net: NetConfig
    agents: list[AgentSpec]
    timeline: list[dict] = field(default_factory=list)
    assertions: list[dict] = field(default_factory=list)
    sense_every_ticks: int = 2

    @property
    def roster(self) -> list[str]:
        return [a.id for a in self.agents]


def packaged_scenario_path(name: str):
    return resources.files("fleetmux").joinpath("scenarios", f"{name}.yaml")


def packaged_world_text(name: str) -> str:
    return resources.files("fleetmux").joinpath("worlds", name).read_text()


def list_packaged_scenarios() -> list[str]:
    root = resources.files("fleetmux").joinpath("scenarios")
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def _world_text(doc: dict, base_dir: Path | None) -> str:
    if "world_text" in doc:
        return doc["world_text"]
    if "world" not in doc:
        raise ScenarioParseError("scenario needs world or world_text")
    ref = doc["world"]
    if base_dir is not None:
        cand = base_dir / ref
        if cand.exists():
            return cand.read_text()
    p = Path(ref)
    if p.exists():
        return p.read_text()
    try:
        return packaged_world_text(Path(ref).name)
    except FileNotFoundError:
        raise ScenarioParseError(f"world file not found: {ref}") from None


def load_scenario(path_or_name, overrides: dict | None = None) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    p = Path(str(path_or_name))
    base_dir = None
    if p.exists():
        text = p.read_text()
        base_dir = p.parent
    else:
        try:
            text = packaged_scenario_path(str(path_or_name)).read_text()
        except FileNotFoundError:
            raise ScenarioParseError(
                f"scenario not found: {path_or_name} (bundled: {', '.join(list_packaged_scenarios())})"
            ) from None
    return parse_scenario(text, base_dir=base_dir, overrides=overrides)


def parse_scenario(text: str, base_dir: Path | None = None, overrides: dict | None = None) -> Scenario:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"bad yaml: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario must be a mapping")
    if doc.get("version") != SCENARIO_VERSION:
        raise ScenarioParseError(f"unsupported scenario version {doc.get('version')}")
    overrides = overrides or {}

    seed = int(overrides.get("seed", doc.get("seed", 0)))
    ticks = int(overrides.get("ticks", doc.get("ticks", 200)))
    tick_ms = int(doc.get("tick_ms", 50))
    if ticks <= 0:
        raise ScenarioParseError("ticks must be positive")

    net_doc = dict(doc.get("net", {}))
    if "loss" in overrides:
        net_doc["loss_prob"] = float(overrides["loss"])
    lat = net_doc.get("latency_ms", [0, 0])
    try:
        net = NetConfig(
            seed=seed,
            latency_ms=(float(lat[0]), float(lat[1])),
            loss_prob=float(net_doc.get("loss_prob", 0.0)),
            dup_prob=float(net_doc.get("dup_prob", 0.0)),
            bandwidth_bytes_per_tick=int(net_doc.get("bandwidth_bytes_per_tick", 0)),
            tick_ms=tick_ms,
        )
    except ValueError as exc:
        raise ScenarioParseError(f"bad net config: {exc}") from exc

    agents = []
    ids = set()
    for a in doc.get("agents", []):
        try:
            spec = AgentSpec(
                id=a["id"],
                kind=a["kind"],
                platform=a.get("platform", "simulated"),
                start=tuple(a.get("start", (1.0, 1.0, 0.0))),
                modes=tuple(a.get("modes", ALL_ROBOT_MODES)),
                services=tuple(a.get("services", ("map",))),
                auto_restart=bool(a.get("auto_restart", False)),
            )
            spec.record()  # validates ids and capability arity
        except (KeyError, ValueError) as exc:
            raise ScenarioParseError(f"bad agent spec {a!r}: {exc}") from exc
        if spec.id in ids:
            raise ScenarioParseError(f"duplicate agent id {spec.id}")
        ids.add(spec.id)
        agents.append(spec)
    if not agents:
        raise ScenarioParseError("scenario has no agents")

    timeline = []
    for ev in doc.get("timeline", []):
        if "tick" not in ev or "action" not in ev:
            raise ScenarioParseError(f"timeline entry needs tick and action: {ev!r}")
        action = ev["action"]
        if action not in TIMELINE_ACTIONS:
            raise ScenarioParseError(f"unknown timeline action {action!r}")
        missing = TIMELINE_ACTIONS[action] - set(ev)
        if missing:
            raise ScenarioParseError(f"{action} missing fields {sorted(missing)}")
        tick = int(ev["tick"])
        if not 0 <= tick < ticks:
            raise ScenarioParseError(f"timeline tick {tick} outside run length {ticks}")
        for key in ("base", "robot", "agent"):
            if key in ev and ev[key] not in ids:
                raise ScenarioParseError(f"{action} references unknown agent {ev[key]!r}")
        timeline.append(dict(ev))

    assertions = []
    for a in doc.get("assertions", []):
        if isinstance(a, str):
            a = {"name": a}
        if a.get("name") not in ASSERTION_NAMES:
            raise ScenarioParseError(f"unknown assertion {a!r}")
        assertions.append(dict(a))

    return Scenario(
        name=str(doc.get("name", "scenario")),
        seed=seed,
        ticks=ticks,
        tick_ms=tick_ms,
        world_text=_world_text(doc, base_dir),
        net=net,
        agents=agents,
        timeline=timeline,
        assertions=assertions,
        sense_every_ticks=int(doc.get("sense_every_ticks", 2)),
    )


def expand_fuzz(scenario: Scenario) -> list[dict]:
    """Expand fuzz_lock generator entries into concrete raw-send events,
    deterministically from the scenario seed."""
    out = []
    for ev in scenario.timeline:
        if ev["action"] != "fuzz_lock":
            out.append(ev)
            continue
        rng = random.Random(scenario.seed * 1_000_003 + 17)
        bases = list(ev["bases"])
        robots = list(ev["robots"])
        count = int(ev["count"])
        start = int(ev["tick"])
        end = int(ev.get("until", scenario.ticks - 1))
        kinds = list(ev.get("kinds", ["CONTROL_REQ", "CONTROL_RELEASE", "MODE_REQ", "TELEOP_CMD"]))
        for _ in range(count):
            tick = rng.randrange(start, max(start + 1, end))
            base = rng.choice(bases)
            robot = rng.choice(robots)
            kind = rng.choice(kinds)
            if kind == "CONTROL_REQ" or kind == "CONTROL_RELEASE":
                body = {"robot": robot}
            elif kind == "MODE_REQ":
                body = {
                    "robot": robot,
                    "mode": rng.choice(["Manual", "Waypoint", "SmartJoystick", "Idle"]),
                    "goal": {"x": rng.uniform(0, 10), "y": rng.uniform(0, 10), "tolerance": 0.3},
                    "convoy": None,
                }
            else:
                body = {
                    "robot": robot,
                    "fwd": rng.uniform(-1, 1),
                    "turn": rng.uniform(-1, 1),
                    "smart": False,
                }
            out.append(
                {"tick": tick, "action": "raw", "base": base, "type": kind, "body": body, "dst": robot}
            )
    out.sort(key=lambda e: e["tick"])
    return out
