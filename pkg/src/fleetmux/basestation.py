"""Operator-side core: fleet state from telemetry, the context-valid action
set, command issue under the lock protocol, and prioritized notifications.

Validity is computed here as a prediction; the robot's behavior tree stays
authoritative. Session beliefs change only on robot-originated feedback
(grants, behavior-tree state, telemetry), never on command transmission.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from fleetmux import convoy as cv
from fleetmux.discovery import DiscoveryService, Sender
from fleetmux.errors import IncompleteGrid, InvalidAction, MalformedFrame, RobotUnavailable, TooFewRobots, UnknownType, VersionMismatch
from fleetmux.grid import OccupancyGrid
from fleetmux.modes import GOAL_TOLERANCE
from fleetmux.netsim import MULTICAST, Envelope
from fleetmux.protocol import AgentRecord, WireMessage, decode_message, encode_message, record_to_body
from fleetmux.protocol.chunks import grid_from_chunks

PRIO_CONFLICT = 0
PRIO_REJECT = 1
PRIO_INFO = 2

MODE_ACTION_TAGS = {
    "Manual": "set_manual",
    "SmartJoystick": "set_smart_joystick",
    "Waypoint": "set_waypoint",
    "Exploration": "set_exploration",
}
ACTION_MODE_BY_TAG = {v: k for k, v in MODE_ACTION_TAGS.items()}

# fields that parameterize an already-valid action and are ignored when
# matching it against the computed valid set
ACTION_PARAM_FIELDS = ("goal",)


@dataclass
class RobotView:
    bt: dict | None = None
    telemetry: dict | None = None
    grid: OccupancyGrid | None = None
    health: dict = field(default_factory=dict)  # node -> (status, restart_count)
    markers: list = field(default_factory=list)
    chunks: dict = field(default_factory=dict)
    chunk_meta: tuple | None = None


@dataclass(frozen=True)
class Notification:
    priority: int
    arrival: int
    ms: int
    robot: str
    text: str


class OperatorSession:
    def __init__(self, base_id: str, sender: Sender, registry):
        self.base_id = base_id
        self.sender = sender
        self.registry = registry
        self.views: dict[str, RobotView] = {}
        self.selection: list[str] = []
        self.held: set[str] = set()
        self.notifications: list[Notification] = []
        self.ui_events: list[dict] = []
        self._arrival = itertools.count()
        self._last_actions: list[dict] | None = None
        self._convoy_counter = itertools.count(1)
        self.refused: list[tuple[dict, str]] = []

    # --- selection ---

    def select(self, robots: list[str]) -> None:
        self.selection = list(dict.fromkeys(robots))
        self._emit("selection", {"selection": self.selection})
        self._refresh_actions()

    def sync_registry(self) -> None:
        """Prune state that references agents no longer in the registry."""
        known = set(self.registry.robots())
        changed = False
        for rid in list(self.selection):
            if rid not in known:
                self.selection.remove(rid)
                changed = True
        for rid in list(self.held):
            if rid not in known:
                self.held.discard(rid)
                self._note(PRIO_CONFLICT, rid, f"{rid} lost from network", 0)
                changed = True
        if changed:
            self._refresh_actions()

    def view(self, robot: str) -> RobotView:
        if robot not in self.views:
            self.views[robot] = RobotView()
        return self.views[robot]

    # --- valid actions ---

    def _find_convoy_leader(self, convoy_id: str) -> str | None:
        for rid, view in self.views.items():
            bt = view.bt
            if bt and bt.get("convoy") and bt["convoy"]["convoy_id"] == convoy_id:
                if bt["convoy"]["role"] == "leader":
                    return rid
        return None

    def compute_valid_actions(self) -> list[dict]:
        """Pure function of (selection, behavior feedback, lock holdings)."""
        actions: list[dict] = []
        known = set(self.registry.robots())
        sel = [r for r in self.selection if r in known]
        for r in sel:
            if r not in self.held:
                actions.append({"tag": "request_control", "robot": r})
                continue
            actions.append({"tag": "release_control", "robot": r})
            actions.append({"tag": "stop", "robot": r})
            view = self.views.get(r)
            if view:
                for node in sorted(view.health):
                    if view.health[node][0] == "dead":
                        actions.append({"tag": "restart_node", "robot": r, "node": node})
        if len(sel) == 1:
            r = sel[0]
            view = self.views.get(r)
            if r in self.held and view and view.bt:
                for mode in view.bt.get("offered", []):
                    tag = MODE_ACTION_TAGS.get(mode)
                    if tag:
                        actions.append({"tag": tag, "robot": r})
        if len(sel) >= 2 and all(r in self.held for r in sel):
            ok = True
            for i, r in enumerate(sel):
                view = self.views.get(r)
                role = "ConvoyLeader" if i == 0 else "ConvoyFollower"
                if not (view and view.bt and role in view.bt.get("offered", [])):
                    ok = False
                    break
            if ok:
                actions.append({"tag": "start_convoy"})
        convoys_seen = set()
        for r in sel:
            view = self.views.get(r)
            if view and view.bt and view.bt.get("convoy"):
                cid = view.bt["convoy"]["convoy_id"]
                if self._find_convoy_leader(cid) is None:
                    continue  # partial/zombie convoy: no one to command
                actions.append({"tag": "peeloff", "robot": r})
                if cid not in convoys_seen:
                    convoys_seen.add(cid)
                    actions.append({"tag": "stop_convoy", "convoy_id": cid})
        actions.sort(key=lambda a: (a["tag"], a.get("robot", ""), a.get("node", "")))
        return actions

    def _refresh_actions(self) -> None:
        actions = self.compute_valid_actions()
        if actions != self._last_actions:
            self._last_actions = actions
            self._emit("actions", {"actions": actions})

    # --- issuing ---

    def _action_key(self, action: dict) -> tuple:
        stripped = {k: v for k, v in action.items() if k not in ACTION_PARAM_FIELDS}
        return tuple(sorted(stripped.items()))

    def issue_action(self, action: dict, now_ms: int) -> list[Envelope]:
        """Map a currently valid action to its outbound messages. Anything
        outside the valid set is refused locally and never transmitted."""
        valid = {self._action_key(a) for a in self.compute_valid_actions()}
        if self._action_key(action) not in valid:
            self.refused.append((action, "not currently valid"))
            raise InvalidAction(repr(action))
        tag = action["tag"]
        out: list[Envelope] = []
        if tag == "request_control":
            self._cmd(out, "CONTROL_REQ", {"robot": action["robot"]}, action["robot"], now_ms)
        elif tag == "release_control":
            self._cmd(out, "CONTROL_RELEASE", {"robot": action["robot"]}, action["robot"], now_ms)
        elif tag == "stop":
            self._cmd(
                out,
                "MODE_REQ",
                {"robot": action["robot"], "mode": "Idle", "goal": None, "convoy": None},
                action["robot"],
                now_ms,
            )
        elif tag in ACTION_MODE_BY_TAG:
            mode = ACTION_MODE_BY_TAG[tag]
            goal = None
            if tag == "set_waypoint":
                g = action.get("goal")
                if not g:
                    self.refused.append((action, "waypoint needs a goal"))
                    raise InvalidAction("set_waypoint without goal")
                goal = {"x": float(g[0]), "y": float(g[1]), "tolerance": GOAL_TOLERANCE}
            self._cmd(
                out,
                "MODE_REQ",
                {"robot": action["robot"], "mode": mode, "goal": goal, "convoy": None},
                action["robot"],
                now_ms,
            )
        elif tag == "start_convoy":
            out.extend(self._start_convoy(now_ms))
        elif tag == "stop_convoy":
            leader = self._find_convoy_leader(action["convoy_id"])
            if leader is None:
                self.refused.append((action, "convoy leader unknown"))
                raise InvalidAction("stop_convoy: leader unknown")
            self._cmd(out, "CONVOY_STOP", {"convoy_id": action["convoy_id"]}, leader, now_ms)
        elif tag == "peeloff":
            robot = action["robot"]
            bt = self.view(robot).bt
            cid = bt["convoy"]["convoy_id"]
            leader = self._find_convoy_leader(cid)
            if leader is None:
                self.refused.append((action, "convoy leader unknown"))
                raise InvalidAction("peeloff: leader unknown")
            self._cmd(out, "CONVOY_PEELOFF", {"convoy_id": cid, "robot": robot}, leader, now_ms)
        elif tag == "restart_node":
            self._cmd(
                out,
                "RESTART_CMD",
                {"robot": action["robot"], "node": action["node"]},
                action["robot"],
                now_ms,
            )
        else:
            self.refused.append((action, "unknown tag"))
            raise InvalidAction(tag)
        return out

    def _start_convoy(self, now_ms: int) -> list[Envelope]:
        order = [r for r in self.selection if r in set(self.registry.robots())]
        bt_states = {r: (self.views[r].bt or {}) for r in order if r in self.views}
        try:
            cv.validate_start(order, self.registry, bt_states, self.held)
        except (TooFewRobots, RobotUnavailable) as exc:
            self.refused.append(({"tag": "start_convoy"}, str(exc)))
            raise InvalidAction(str(exc)) from exc
        cid = f"cv-{self.base_id}-{next(self._convoy_counter)}"
        spacing = cv.DEFAULT_SPACING
        out: list[Envelope] = []
        self._cmd(
            out,
            "CONVOY_START",
            {
                "convoy_id": cid,
                "order": order,
                "spacing": spacing,
                "leader_submode": "teleop",
            },
            order[0],
            now_ms,
        )
        for i, rid in enumerate(order[1:], start=1):
            assignment = {
                "convoy_id": cid,
                "leader": order[0],
                "index": i,
                "spacing": spacing,
                "role": "follower",
            }
            self._cmd(
                out,
                "MODE_REQ",
                {"robot": rid, "mode": "ConvoyFollower", "goal": None, "convoy": assignment},
                rid,
                now_ms,
            )
        return out

    def teleop(self, robot: str, fwd: float, turn: float, now_ms: int, smart: bool = False) -> list[Envelope]:
        """Joystick stream; only meaningful toward held robots."""
        if robot not in self.held:
            return []
        out: list[Envelope] = []
        self._cmd(
            out,
            "TELEOP_CMD",
            {"robot": robot, "fwd": float(fwd), "turn": float(turn), "smart": bool(smart)},
            robot,
            now_ms,
        )
        return out

    def waypoint_cmd(self, robot: str, goal, now_ms: int) -> list[Envelope]:
        """Retarget a held robot's stored goal (waypoint mode or a convoy
        leader's waypoint sub-mode)."""
        if robot not in self.held:
            return []
        out: list[Envelope] = []
        self._cmd(
            out,
            "WAYPOINT_CMD",
            {"robot": robot, "goal": {"x": float(goal[0]), "y": float(goal[1]), "tolerance": GOAL_TOLERANCE}},
            robot,
            now_ms,
        )
        return out

    def _cmd(self, out: list, msg_type: str, body: dict, dst: str, now_ms: int) -> None:
        msg = self.sender.make(msg_type, body, now_ms)
        out.append(Envelope(frame=encode_message(msg), dst=dst))

    # --- feedback ---

    def _note(self, priority: int, robot: str, text: str, now_ms: int) -> None:
        n = Notification(priority, next(self._arrival), now_ms, robot, text)
        self.notifications.append(n)
        self._emit(
            "notification",
            {"priority": n.priority, "robot": n.robot, "text": n.text, "ms": n.ms},
        )

    def ordered_notifications(self) -> list[Notification]:
        return sorted(self.notifications, key=lambda n: (n.priority, n.arrival))

    def _emit(self, kind: str, data: dict) -> None:
        self.ui_events.append({"kind": kind, "data": data})

    def apply_feedback(self, msg: WireMessage, now_ms: int) -> None:
        t = msg.type
        body = msg.body
        src = msg.src
        if t == "BT_STATE":
            view = self.view(src)
            view.bt = body
            if body["authorized"] == self.base_id:
                self.held.add(src)
            else:
                self.held.discard(src)
            self._emit("bt", {"robot": src, "bt": body})
            self._refresh_actions()
        elif t == "TELEMETRY":
            view = self.view(src)
            view.telemetry = body
            known = {(m["kind"], m["x"], m["y"]) for m in view.markers}
            for m in body.get("markers", []):
                if (m["kind"], m["x"], m["y"]) not in known:
                    view.markers.append(m)
            self._emit("telemetry", {"robot": src, "telemetry": body})
        elif t == "MAP_CHUNK":
            view = self.view(src)
            meta = (body["count"], body["width"], body["height"], body["resolution"])
            if view.chunk_meta != meta:
                view.chunk_meta = meta
                view.chunks = {}
            view.chunks[body["index"]] = body
            if len(view.chunks) == body["count"]:
                try:
                    view.grid = grid_from_chunks(list(view.chunks.values()))
                except IncompleteGrid:
                    return
                self._emit(
                    "map",
                    {
                        "robot": src,
                        "width": view.grid.width,
                        "height": view.grid.height,
                        "resolution": view.grid.resolution,
                        "origin": list(view.grid.origin),
                        "cells": _grid_b64(view.grid),
                    },
                )
        elif t == "NOTIFY":
            self._note(body["priority"], body["robot"], body["text"], now_ms)
        elif t == "HEALTH":
            view = self.view(src)
            view.health[body["node"]] = (body["status"], body["restart_count"])
            self._emit("health", {"robot": src, **body})
            if body["status"] == "dead":
                self._note(PRIO_CONFLICT, src, f"node {body['node']} dead on {src}", now_ms)
            elif body["status"] == "ok":
                self._note(PRIO_INFO, src, f"node {body['node']} recovered on {src}", now_ms)
            self._refresh_actions()
        elif t == "CONTROL_GRANT":
            self.held.add(body["robot"])
            self._emit("grant", {"robot": body["robot"]})
            self._refresh_actions()
        elif t == "CONTROL_DENY":
            holder = body.get("holder")
            self._note(
                PRIO_CONFLICT,
                body["robot"],
                f"control denied for {body['robot']}: {body['reason']}"
                + (f" (holder {holder})" if holder else ""),
                now_ms,
            )
        elif t == "MODE_ACK":
            self._emit("mode_ack", {"robot": body["robot"], "mode": body["mode"]})
        elif t == "MODE_REJECT":
            self._note(
                PRIO_REJECT,
                body["robot"],
                f"{body['mode']} rejected: {body['reason']}",
                now_ms,
            )

    # --- console snapshot ---

    def snapshot(self, now_ms: int) -> dict:
        robots = {}
        for rid in self.registry.robots():
            view = self.views.get(rid, RobotView())
            robots[rid] = {
                "bt": view.bt,
                "telemetry": view.telemetry,
                "health": {n: list(v) for n, v in sorted(view.health.items())},
                "markers": view.markers,
                "map": None
                if view.grid is None
                else {
                    "width": view.grid.width,
                    "height": view.grid.height,
                    "resolution": view.grid.resolution,
                    "origin": list(view.grid.origin),
                    "cells": _grid_b64(view.grid),
                },
            }
        return {
            "base": self.base_id,
            "ms": now_ms,
            "agents": [record_to_body(r) for _, r in sorted(self.registry.records.items())],
            "selection": self.selection,
            "held": sorted(self.held),
            "robots": robots,
            "actions": self.compute_valid_actions(),
            "notifications": [
                {"priority": n.priority, "robot": n.robot, "text": n.text, "ms": n.ms}
                for n in self.ordered_notifications()
            ],
        }


def _grid_b64(grid: OccupancyGrid) -> str:
    import base64

    return base64.b64encode(grid.cells.tobytes()).decode("ascii")


class BasestationAgent:
    kind = "basestation"

    def __init__(self, record: AgentRecord):
        self.id = record.id
        self.record = record
        self.sender = Sender(self.id)
        self.discovery = DiscoveryService(record, self.sender)
        self.session = OperatorSession(self.id, self.sender, self.discovery.registry)
        self._seen: set[tuple[str, int]] = set()
        self._pending_actions: list[dict] = []
        self._pending_raw: list[tuple[str, dict, str]] = []
        self._last_broadcast_gen = 0
        self.action_errors: list[str] = []

    # --- scripted/console inputs ---

    def enqueue_action(self, action: dict) -> None:
        self._pending_actions.append(action)

    def enqueue_raw(self, msg_type: str, body: dict, dst: str) -> None:
        """Raw wire injection that bypasses session validity (fuzzing the
        robot-side enforcement)."""
        self._pending_raw.append((msg_type, body, dst))

    def tick(self, tick: int, now_ms: int, frames: list[bytes]) -> list[Envelope]:
        out: list[Envelope] = []
        for frame in frames:
            try:
                msg = decode_message(frame)
            except (MalformedFrame, UnknownType, VersionMismatch):
                continue
            if msg.key() in self._seen:
                continue
            self._seen.add(msg.key())
            if msg.type in ("DISCOVER_REQ", "DISCOVER_RESP", "AGENT_LIST"):
                out.extend(self.discovery.handle(msg, now_ms))
            else:
                self.session.apply_feedback(msg, now_ms)

        envs, removed = self.discovery.periodic(now_ms)
        out.extend(envs)
        if removed:
            self.session.sync_registry()

        # publish the agent list on membership change
        reg = self.discovery.registry
        if reg.generation != self._last_broadcast_gen:
            self._last_broadcast_gen = reg.generation
            records = [record_to_body(self.record)] + [
                record_to_body(r) for _, r in sorted(reg.records.items())
            ]
            msg = self.sender.make(
                "AGENT_LIST", {"records": records, "generation": reg.generation}, now_ms
            )
            out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))
            self.session.sync_registry()

        for action in self._pending_actions:
            try:
                if action.get("tag") == "select":
                    self.session.select(action["robots"])
                elif action.get("tag") == "teleop":
                    out.extend(
                        self.session.teleop(
                            action["robot"],
                            action["fwd"],
                            action["turn"],
                            now_ms,
                            smart=action.get("smart", False),
                        )
                    )
                elif action.get("tag") == "waypoint_cmd":
                    out.extend(
                        self.session.waypoint_cmd(action["robot"], action["goal"], now_ms)
                    )
                else:
                    out.extend(self.session.issue_action(action, now_ms))
            except InvalidAction as exc:
                self.action_errors.append(str(exc))
        self._pending_actions = []

        for msg_type, body, dst in self._pending_raw:
            msg = self.sender.make(msg_type, body, now_ms)
            out.append(Envelope(frame=encode_message(msg), dst=dst))
        self._pending_raw = []
        return out
