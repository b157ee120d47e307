"""Deterministic scenario loop: one network, all agents, scripted timeline,
online metrics, an event log of every posted frame, and assertion checks.

Agents tick in roster order; all exchange goes through netsim post/step, so
(scenario, seed) fully determines the run, including the log bytes.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from fleetmux import kernels
from fleetmux.agent import AgentConfig, RobotAgent
from fleetmux.arbiter import DROPPED_UNAUTHORIZED, FORWARDED
from fleetmux.basestation import BasestationAgent
from fleetmux.errors import AssertionFailed
from fleetmux.grid import UNKNOWN
from fleetmux.nav import ROBOT_RADIUS
from fleetmux.netsim import Network
from fleetmux.robot import World
from fleetmux.scenario import Scenario, expand_fuzz

MODE_TAG_BY_NAME = {
    "Manual": "set_manual",
    "SmartJoystick": "set_smart_joystick",
    "Waypoint": "set_waypoint",
    "Exploration": "set_exploration",
    "Idle": "stop",
}


@dataclass
class RunResult:
    metrics: dict
    assertion_results: list[tuple[str, bool, str]]
    event_log: list[bytes]
    audit_log: list[str]

    @property
    def ok(self) -> bool:
        return all(ok for _, ok, _ in self.assertion_results)


@dataclass
class SpacingSample:
    ms: int
    gaps: list[float]


class ScenarioRunner:
    def __init__(self, scenario: Scenario, log_dir=None, ui_recorder_factory=None):
        self.scenario = scenario
        self.world = World.from_text(scenario.world_text)
        self.net = Network(scenario.net)
        self.log_dir = Path(log_dir) if log_dir else None
        self.agents: dict[str, object] = {}
        self.robots: dict[str, RobotAgent] = {}
        self.bases: dict[str, BasestationAgent] = {}
        cfg = AgentConfig(
            tick_ms=scenario.tick_ms, sense_every_ticks=scenario.sense_every_ticks
        )
        for spec in scenario.agents:
            record = spec.record()
            if spec.kind == "robot":
                rcfg = AgentConfig(
                    tick_ms=cfg.tick_ms,
                    sense_every_ticks=cfg.sense_every_ticks,
                    auto_restart=spec.auto_restart,
                )
                agent = RobotAgent(record, self.world, spec.start, rcfg)
                self.robots[spec.id] = agent
            else:
                agent = BasestationAgent(record)
                self.bases[spec.id] = agent
            self.agents[spec.id] = agent
            self.net.register(spec.id)
        self.timeline = self._expand_timeline(expand_fuzz(scenario))
        self.silenced: dict[str, int] = {}
        self.event_log: list[bytes] = []
        self.ui_recorder = None
        if ui_recorder_factory is not None and self.bases:
            first = next(iter(self.bases.values()))
            self.ui_recorder = ui_recorder_factory(first)

        # metrics accumulators
        self.convergence_ms: int | None = None
        self.spacing_samples: list[SpacingSample] = []
        self.min_separation = math.inf
        self.known_monotone = True
        self._prev_known: dict[str, int] = {}
        self.expired_seen: dict[str, set[str]] = defaultdict(set)
        self._prev_present: dict[str, set[str]] = defaultdict(set)

    def _expand_timeline(self, timeline: list[dict]) -> dict[int, list[dict]]:
        by_tick: dict[int, list[dict]] = defaultdict(list)
        for ev in timeline:
            if ev["action"] == "teleop" and "until" in ev:
                for t in range(int(ev["tick"]), min(int(ev["until"]) + 1, self.scenario.ticks)):
                    e = dict(ev)
                    e["tick"] = t
                    by_tick[t].append(e)
            else:
                by_tick[int(ev["tick"])].append(ev)
        return by_tick

    # --- timeline dispatch ---

    def _apply_event(self, ev: dict, now_ms: int) -> None:
        action = ev["action"]
        if action == "kill_node":
            self.robots[ev["robot"]].kill_node(ev["node"], now_ms)
        elif action == "set_battery":
            self.robots[ev["robot"]].set_battery(bool(ev["ok"]))
        elif action == "silence":
            self.silenced[ev["agent"]] = int(ev["until"])
        elif action == "raw":
            self.bases[ev["base"]].enqueue_raw(ev["type"], ev["body"], ev["dst"])
        elif action == "select":
            self.bases[ev["base"]].enqueue_action({"tag": "select", "robots": list(ev["robots"])})
        elif action == "teleop":
            self.bases[ev["base"]].enqueue_action(
                {
                    "tag": "teleop",
                    "robot": ev["robot"],
                    "fwd": float(ev["fwd"]),
                    "turn": float(ev["turn"]),
                    "smart": bool(ev.get("smart", False)),
                }
            )
        elif action == "waypoint_cmd":
            self.bases[ev["base"]].enqueue_action(
                {"tag": "waypoint_cmd", "robot": ev["robot"], "goal": list(ev["goal"])}
            )
        elif action == "request_control":
            self.bases[ev["base"]].enqueue_action({"tag": "request_control", "robot": ev["robot"]})
        elif action == "release_control":
            self.bases[ev["base"]].enqueue_action({"tag": "release_control", "robot": ev["robot"]})
        elif action == "set_mode":
            tag = MODE_TAG_BY_NAME.get(ev["mode"])
            if tag is None:
                raise AssertionFailed("timeline", f"no action tag for mode {ev['mode']}")
            act = {"tag": tag, "robot": ev["robot"]}
            if "goal" in ev:
                act["goal"] = list(ev["goal"])
            self.bases[ev["base"]].enqueue_action(act)
        elif action == "start_convoy":
            base = self.bases[ev["base"]]
            base.enqueue_action({"tag": "select", "robots": list(ev["order"])})
            base.enqueue_action({"tag": "start_convoy"})
        elif action == "stop_convoy":
            self.bases[ev["base"]].enqueue_action({"tag": "stop_convoy", "robot": ev["robot"]})
        elif action == "peeloff":
            self.bases[ev["base"]].enqueue_action({"tag": "peeloff", "robot": ev["robot"]})
        elif action == "restart_node":
            self.bases[ev["base"]].enqueue_action(
                {"tag": "restart_node", "robot": ev["robot"], "node": ev["node"]}
            )

    # --- the loop ---

    def run(self) -> RunResult:
        roster = self.scenario.roster
        for tick in range(self.scenario.ticks):
            now_ms = tick * self.scenario.tick_ms
            inboxes: dict[str, list[bytes]] = defaultdict(list)
            for dst, frame in self.net.step(tick):
                inboxes[dst].append(frame)
            for ev in self.timeline.get(tick, []):
                self._apply_event(ev, now_ms)
            for aid in roster:
                agent = self.agents[aid]
                outs = agent.tick(tick, now_ms, inboxes.get(aid, []))
                if aid in self.silenced and tick <= self.silenced[aid]:
                    continue
                for env in outs:
                    env.posted_at = tick
                    self.net.post(aid, env)
                    self.event_log.append(env.frame)
            self._sample_metrics(now_ms)
            if self.ui_recorder is not None:
                self.ui_recorder.after_tick(now_ms)
        if self.ui_recorder is not None:
            self.ui_recorder.close()
        metrics = self._final_metrics()
        results = [self._check(a, metrics) for a in self.scenario.assertions]
        audit = self._audit_lines()
        if self.log_dir is not None:
            self._write_logs(metrics, results, audit)
        return RunResult(metrics, results, self.event_log, audit)

    # --- metrics ---

    def _sample_metrics(self, now_ms: int) -> None:
        roster = set(self.scenario.roster)
        if self.convergence_ms is None:
            complete = all(
                set(a.discovery.registry.ids()) == roster - {aid}
                for aid, a in self.agents.items()
            )
            if complete:
                self.convergence_ms = now_ms

        poses = [(r.phys.x, r.phys.y) for r in self.robots.values()]
        for i in range(len(poses)):
            for j in range(i + 1, len(poses)):
                d = math.dist(poses[i], poses[j])
                self.min_separation = min(self.min_separation, d)

        for rid, r in self.robots.items():
            prev = self._prev_known.get(rid)
            cur = r.known.known_count()
            if prev is not None and cur < prev:
                self.known_monotone = False
            self._prev_known[rid] = cur

        for rid, r in self.robots.items():
            cs = r.convoy_cs
            if cs is not None and cs.active and len(cs.order) >= 2 and cs.trail:
                gaps = self._convoy_gaps(cs)
                if gaps:
                    self.spacing_samples.append(SpacingSample(now_ms, gaps))

        for aid, a in self.agents.items():
            present = set(a.discovery.registry.ids())
            for other in self._prev_present[aid] - present:
                self.expired_seen[other].add(aid)  # removal after being known
            self._prev_present[aid] = present

    def _convoy_gaps(self, cs) -> list[float]:
        positions = []
        for rid in cs.order:
            robot = self.robots.get(rid)
            if robot is None:
                return []
            positions.append(self._project_on_trail(cs.trail, robot.phys.x, robot.phys.y))
        return [positions[i] - positions[i + 1] for i in range(len(positions) - 1)]

    @staticmethod
    def _project_on_trail(trail, x: float, y: float) -> float:
        best_s = trail[0].s
        best_d = math.inf
        for a, b in zip(trail, trail[1:]):
            vx, vy = b.x - a.x, b.y - a.y
            vv = vx * vx + vy * vy
            t = 0.0 if vv == 0 else max(0.0, min(1.0, ((x - a.x) * vx + (y - a.y) * vy) / vv))
            px, py = a.x + t * vx, a.y + t * vy
            d = (x - px) ** 2 + (y - py) ** 2
            if d < best_d:
                best_d = d
                best_s = a.s + t * (b.s - a.s)
        if len(trail) == 1:
            best_s = trail[0].s
        return best_s

    def _lock_violations(self) -> tuple[int, int]:
        """(windows with >1 forwarding source between lock changes,
        instants with >1 holder - structurally one lock field per robot,
        asserted 0). Windows use the arbiter's per-robot event ordering."""
        violations = 0
        for r in self.robots.values():
            changes = [e.order for e in r.arbiter.lock_events]
            boundaries = [0] + changes + [math.inf]
            fwd = [a for a in r.arbiter.audit if a.verdict == FORWARDED]
            for lo, hi in zip(boundaries, boundaries[1:]):
                srcs = {a.src for a in fwd if lo < a.order <= hi}
                if len(srcs) > 1:
                    violations += 1
        return violations, 0

    def _mux_violations(self) -> int:
        bad = 0
        for r in self.robots.values():
            for dec in r.nav_log:
                if dec.mode == "Idle":
                    if dec.source != "stop":
                        bad += 1
                    continue
                designated = {
                    "Manual": "teleop",
                    "SmartJoystick": "smart_joystick",
                    "Waypoint": "waypoint",
                    "Exploration": "exploration",
                    "ConvoyFollower": "convoy",
                    "GetOutOfWay": "getout",
                }.get(dec.mode)
                if dec.mode == "ConvoyLeader":
                    if dec.source not in ("teleop", "smart_joystick", "waypoint"):
                        bad += 1
                elif dec.source != designated:
                    bad += 1
        return bad

    def _final_metrics(self) -> dict:
        lock_viol, multi_holder = self._lock_violations()
        in_band = 0
        total = 0
        warmup = 30_000
        for s in self.spacing_samples:
            if s.ms < warmup:
                continue
            for g in s.gaps:
                total += 1
                if 1.5 <= g <= 2.5:
                    in_band += 1
        coverage = {}
        for rid, r in self.robots.items():
            start = self.scenario.agents[[a.id for a in self.scenario.agents].index(rid)].start
            sr, sc = self.world.grid.world_to_cell(start[0], start[1])
            reach = kernels.reachable_mask(self.world.grid.cells, sr, sc)
            reachable = reach == 1
            n_reach = int(reachable.sum())
            if n_reach:
                known = (r.known.cells != UNKNOWN) & reachable
                coverage[rid] = float(known.sum()) / n_reach
        return {
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "ticks": self.scenario.ticks,
            "convergence_ms": self.convergence_ms,
            "lock_violations": lock_viol,
            "multi_holder_instants": multi_holder,
            "mux_violations": self._mux_violations(),
            "collisions": sum(r.phys.collisions for r in self.robots.values()),
            "min_separation": None if math.isinf(self.min_separation) else self.min_separation,
            "spacing_in_band_frac": (in_band / total) if total else None,
            "spacing_samples": total,
            "goal_trail_dev_max": max(
                (r.goal_trail_dev_max for r in self.robots.values()), default=0.0
            ),
            "coverage": coverage,
            "known_monotone": self.known_monotone,
            "decode_errors": sum(r.decode_errors for r in self.robots.values()),
            "frames_posted": self.net.stats.posted,
            "frames_delivered": self.net.stats.delivered,
            "forwarded_commands": sum(
                1 for r in self.robots.values() for a in r.arbiter.audit if a.verdict == FORWARDED
            ),
            "dropped_unauthorized": sum(
                1
                for r in self.robots.values()
                for a in r.arbiter.audit
                if a.verdict == DROPPED_UNAUTHORIZED
            ),
        }

    # --- assertions ---

    def _check(self, spec: dict, metrics: dict) -> tuple[str, bool, str]:
        name = spec["name"]
        if name == "zero_lock_violations":
            ok = metrics["lock_violations"] == 0 and metrics["multi_holder_instants"] == 0
            return name, ok, f"violations={metrics['lock_violations']}"
        if name == "mux_exclusive":
            return name, metrics["mux_violations"] == 0, f"violations={metrics['mux_violations']}"
        if name == "converged_within":
            periods = float(spec.get("periods", 1))
            limit = periods * 2000
            ok = metrics["convergence_ms"] is not None and metrics["convergence_ms"] <= limit
            return name, ok, f"converged_ms={metrics['convergence_ms']} limit={limit}"
        if name == "expired":
            agent = spec["agent"]
            others = set(self.scenario.roster) - {agent}
            ok = self.expired_seen.get(agent, set()) >= others
            missing = sorted(others - self.expired_seen.get(agent, set()))
            return name, ok, f"not expired at: {missing}"
        if name == "spacing_band":
            frac = float(spec.get("frac", 0.9))
            got = metrics["spacing_in_band_frac"]
            ok = got is not None and got >= frac
            return name, ok, f"in_band={got} need>={frac} samples={metrics['spacing_samples']}"
        if name == "zero_collisions":
            return name, metrics["collisions"] == 0, f"collisions={metrics['collisions']}"
        if name == "min_separation":
            need = float(spec.get("meters", 2 * ROBOT_RADIUS))
            got = metrics["min_separation"]
            ok = got is None or got > need
            return name, ok, f"min={got} need>{need}"
        if name == "coverage_min":
            robot = spec["robot"]
            need = float(spec.get("value", 0.95))
            got = metrics["coverage"].get(robot, 0.0)
            return name, got >= need, f"coverage={got:.4f} need>={need}"
        if name == "exploration_done":
            r = self.robots[spec["robot"]]
            return name, r.explore.done, f"done={r.explore.done}"
        if name == "goals_on_trail":
            tol = float(spec.get("tol", 0.05))
            got = metrics["goal_trail_dev_max"]
            return name, got <= tol, f"max_dev={got:.4f} tol={tol}"
        if name == "monotone_mapping":
            return name, metrics["known_monotone"], ""
        if name == "final_mode":
            r = self.robots[spec["robot"]]
            ok = r.bt.mode == spec["mode"]
            return name, ok, f"mode={r.bt.mode} want={spec['mode']}"
        if name == "no_decode_errors":
            return name, metrics["decode_errors"] == 0, f"errors={metrics['decode_errors']}"
        return name, False, "unknown assertion"

    # --- logs ---

    def _audit_lines(self) -> list[str]:
        lines = []
        for rid in sorted(self.robots):
            r = self.robots[rid]
            for e in r.arbiter.lock_events:
                lines.append(
                    json.dumps(
                        {"robot": rid, "kind": "lock", "ms": e.tick_ms, "holder": e.holder, "cause": e.cause},
                        sort_keys=True,
                    )
                )
            for a in r.arbiter.audit:
                lines.append(
                    json.dumps(
                        {
                            "robot": rid,
                            "kind": "cmd",
                            "ms": a.tick_ms,
                            "src": a.src,
                            "seq": a.seq,
                            "type": a.msg_type,
                            "verdict": a.verdict,
                        },
                        sort_keys=True,
                    )
                )
            for d in r.nav_log:
                lines.append(
                    json.dumps(
                        {"robot": rid, "kind": "nav", "ms": d.tick_ms, "mode": d.mode, "source": d.source},
                        sort_keys=True,
                    )
                )
        return lines

    def _write_logs(self, metrics: dict, results, audit: list[str]) -> None:
        self.log_dir.mkdir(parents=True, exist_ok=True)
        with open(self.log_dir / "events.log", "wb") as fh:
            for frame in self.event_log:
                fh.write(frame + b"\n")
        with open(self.log_dir / "audit.log", "w", encoding="utf-8") as fh:
            for line in audit:
                fh.write(line + "\n")
        doc = dict(metrics)
        doc["assertions"] = [
            {"name": n, "ok": ok, "detail": detail} for n, ok, detail in results
        ]
        with open(self.log_dir / "metrics.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def run_scenario(scenario: Scenario, log_dir=None, ui_recorder_factory=None) -> RunResult:
    return ScenarioRunner(scenario, log_dir=log_dir, ui_recorder_factory=ui_recorder_factory).run()
