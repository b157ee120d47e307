"""Robot agent: one sequential per-tick pipeline over the whole stack.

Order inside a tick is fixed: ingest, health, discovery, command routing,
behavior-tree tick, directive sources, mux, navigation, physics, convoy
coordination, telemetry. All command ingress reaches the behavior tree only
through the arbiter's filter, and the navigation layer is called only with
the mux's output; every forwarded directive is logged with its source tag
so both invariants are auditable after a run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from fleetmux import convoy as cv
from fleetmux import nav
from fleetmux.arbiter import CommandArbiter, TelemetryPublisher
from fleetmux.behavior import BehaviorTree, Blackboard, MuxDecision, PRIO_REJECT
from fleetmux.discovery import REGISTRY_MSG_TYPES, DiscoveryService, Sender
from fleetmux.errors import MalformedFrame, UnknownNode, UnknownType, VersionMismatch
from fleetmux.grid import OccupancyGrid
from fleetmux.modes import (
    DONE,
    GETOUT_RESOLVE_M,
    HOLD,
    REACHED,
    STOP,
    STUCK,
    DirectTwist,
    ExploreState,
    GoalPoint,
    Stop,
    V_MAX,
    W_MAX,
    clamp_twist,
    exploration_step,
    getout_step,
    path_conflicts,
    smart_joystick_directive,
    waypoint_directive,
)
from fleetmux.netsim import MULTICAST, Envelope
from fleetmux.protocol import AgentRecord, WireMessage, decode_message, encode_message
from fleetmux.protocol.messages import COMMAND_TYPES
from fleetmux.robot import (
    HealthMonitor,
    RobotPhysState,
    World,
    detect_features,
    sense_and_map,
    step_robot,
)

PEER_PATH_FRESH_MS = 1000
CONVOY_GOAL_PERIOD_MS = 200
TELEMETRY_PATH_STRIDE = 5
# A follower whose trail target slid to or behind its own pose parks and
# waits for the trail to move on; forward-only arcs cannot regress and
# chasing a receding target backward ends in U-turn loops.
CONVOY_HOLD_BEHIND_M = 1.2
# Goals far off the nose can sit inside the minimum turning circle where no
# forward arc reaches them; align in place first, with hysteresis so the
# planner and the rotation do not chatter at the threshold.
ALIGN_ENTER_RAD = 1.3
ALIGN_EXIT_RAD = 0.5
ALIGN_GAIN = 2.0
# and it brakes when its predecessor in the column is closer ahead than
# half the spacing (formation keep-out; resolves start-up crowding on a
# short trail where the spec rule collapses all targets onto one point)
CONVOY_MIN_HEADWAY_FRAC = 0.5


@dataclass
class AgentConfig:
    tick_ms: int = 50
    sense_every_ticks: int = 2
    auto_restart: bool = False


class RobotAgent:
    kind = "robot"

    def __init__(
        self,
        record: AgentRecord,
        world: World,
        start_pose: tuple[float, float, float],
        config: AgentConfig | None = None,
        tree=None,
    ):
        self.id = record.id
        self.record = record
        self.world = world
        self.config = config or AgentConfig()
        self.sender = Sender(self.id)
        self.discovery = DiscoveryService(record, self.sender)
        self.arbiter = CommandArbiter(self.id, self.sender)
        self.telemetry = TelemetryPublisher(self.id, self.sender)
        self.health = HealthMonitor(auto_restart=self.config.auto_restart)
        self.bt = BehaviorTree(self.id, record.caps.modes, tree)
        self.bb = Blackboard()
        self.phys = RobotPhysState(*start_pose)
        self.known = OccupancyGrid(
            world.grid.resolution,
            world.grid.origin,
            world.grid.width,
            world.grid.height,
        )
        self.lib = nav.build_trajectory_library()
        self.explore = ExploreState()
        self.convoy_cs: cv.ConvoyState | None = None
        self.seen_features: set = set()
        self.markers: list[dict] = []
        self.peer_telemetry: dict[str, tuple[int, list, tuple]] = {}  # ms, path, (x, y)
        self.nav_log: list[MuxDecision] = []
        self.selected_path: list = []
        self.decode_errors = 0
        self.known_history: list[int] = []
        self._known_version = 0
        self._inflated: OccupancyGrid | None = None
        self._inflated_version = -1
        self._last_convoy_goal_ms: int | None = None
        self._getout_stuck_notified = False
        self._convoy_targets: dict = {}
        self._aligning = False
        self.goal_trail_dev_max = 0.0

    # --- fault/script hooks (driven by the scenario runner) ---

    def kill_node(self, node: str, now_ms: int) -> None:
        self.health.kill(node, now_ms)

    def set_battery(self, ok: bool) -> None:
        self.bb.battery_ok = ok

    # --- helpers ---

    def _notify(self, priority: int, text: str, out: list, now_ms: int,
                dst: str = MULTICAST) -> None:
        msg = self.sender.make(
            "NOTIFY", {"robot": self.id, "priority": priority, "text": text}, now_ms
        )
        out.append(Envelope(frame=encode_message(msg), dst=dst))

    def _reply(self, msg_type: str, body: dict, dst: str, out: list, now_ms: int) -> None:
        msg = self.sender.make(msg_type, body, now_ms)
        out.append(Envelope(frame=encode_message(msg), dst=dst))

    def inflated_grid(self) -> OccupancyGrid:
        if self._inflated_version != self._known_version:
            self._inflated = nav.inflate_grid(self.known)
            self._inflated_version = self._known_version
        return self._inflated

    # --- command dispatch (already authority-filtered) ---

    def _stop_convoy_fanout(self, out: list, now_ms: int) -> None:
        """Coordinator deactivation: tell everyone, drop self to Idle."""
        cs = self.convoy_cs
        if cs is None or not cs.active:
            return
        cv.handle_convoy_command(cs, "CONVOY_STOP")
        self._reply("CONVOY_STOP", {"convoy_id": cs.convoy_id}, MULTICAST, out, now_ms)
        if self.bt.mode == "ConvoyLeader":
            self.bt.transition("Idle", self.bb, now_ms, "convoy_stop")

    def _dispatch_command(self, msg: WireMessage, out: list, now_ms: int) -> None:
        body = msg.body
        t = msg.type
        if t == "MODE_REQ":
            was_leader = self.bt.mode == "ConvoyLeader"
            verdict, reply = self.bt.handle_mode_request(body, self.bb, now_ms)
            self._reply(verdict, reply, msg.src, out, now_ms)
            if was_leader and self.bt.mode != "ConvoyLeader":
                self._stop_convoy_fanout(out, now_ms)
        elif t == "TELEOP_CMD":
            self.bb.last_joystick = (body["fwd"], body["turn"])
            self.bb.last_joystick_at = now_ms
            if self.bt.mode == "ConvoyLeader":
                self.bt.leader_submode = (
                    "smart_joystick" if body.get("smart") else "teleop"
                )
        elif t == "WAYPOINT_CMD":
            if self.bt.mode in ("Waypoint", "ConvoyLeader"):
                g = body["goal"]
                self.bb.goal = GoalPoint(g["x"], g["y"], g["tolerance"])
                if self.bt.mode == "ConvoyLeader":
                    self.bt.leader_submode = "waypoint"
        elif t == "CONVOY_START":
            assignment = {
                "convoy_id": body["convoy_id"],
                "leader": self.id,
                "index": 0,
                "spacing": body["spacing"],
                "role": "leader",
            }
            req = {"robot": self.id, "mode": "ConvoyLeader", "convoy": assignment}
            verdict, reply = self.bt.handle_mode_request(req, self.bb, now_ms)
            self._reply(verdict, reply, msg.src, out, now_ms)
            if verdict == "MODE_ACK":
                self.convoy_cs = cv.ConvoyState(
                    body["convoy_id"], list(body["order"]), body["spacing"]
                )
                cv.start_convoy(self.convoy_cs, self.phys.pose)
                submode = body.get("leader_submode", "teleop")
                if submode in ("teleop", "smart_joystick", "waypoint"):
                    self.bt.leader_submode = submode
        elif t == "CONVOY_STOP":
            cid = body["convoy_id"]
            if self.convoy_cs is not None and self.convoy_cs.convoy_id == cid:
                self._stop_convoy_fanout(out, now_ms)
            if self.bb.convoy is not None and self.bb.convoy["convoy_id"] == cid:
                self.bt.transition("Idle", self.bb, now_ms, "convoy_stop")
        elif t == "CONVOY_PEELOFF":
            cid = body["convoy_id"]
            target = body["robot"]
            cs = self.convoy_cs
            if cs is not None and cs.active and cs.convoy_id == cid:
                if target == self.id:
                    self._stop_convoy_fanout(out, now_ms)
                elif target in cs.order:
                    removed, stopped = cv.handle_convoy_command(
                        cs, "CONVOY_PEELOFF", target
                    )
                    self._reply(
                        "CONVOY_PEELOFF",
                        {"convoy_id": cid, "robot": target},
                        target,
                        out,
                        now_ms,
                    )
                    if stopped:
                        self._reply(
                            "CONVOY_STOP", {"convoy_id": cid}, MULTICAST, out, now_ms
                        )
                        if self.bt.mode == "ConvoyLeader":
                            self.bt.transition("Idle", self.bb, now_ms, "convoy_stop")
                else:
                    self._notify(
                        PRIO_REJECT, f"{target} not in convoy {cid}", out, now_ms, msg.src
                    )
            elif (
                self.bb.convoy is not None
                and self.bb.convoy["convoy_id"] == cid
                and target == self.id
            ):
                self.bt.transition("Idle", self.bb, now_ms, "peeloff")
        elif t == "CONVOY_GOAL":
            assign = self.bb.convoy
            if (
                assign is not None
                and assign["convoy_id"] == body["convoy_id"]
                and self.id in body["targets"]
            ):
                tgt = body["targets"][self.id]
                self.bb.convoy_goal = GoalPoint(tgt["x"], tgt["y"], tgt["tolerance"])
                self.bb.last_convoy_goal_at = now_ms
                assign["index"] = tgt["index"]
                self._convoy_targets = body["targets"]
        elif t == "RESTART_CMD":
            try:
                self.health.request_restart(body["node"], now_ms)
            except UnknownNode:
                self._notify(
                    PRIO_REJECT, f"unknown node {body['node']}", out, now_ms, msg.src
                )

    def _addressed_to_me(self, msg: WireMessage) -> bool:
        body = msg.body
        if msg.type in ("MODE_REQ", "TELEOP_CMD", "WAYPOINT_CMD", "RESTART_CMD"):
            return body["robot"] == self.id
        if msg.type == "CONVOY_START":
            return bool(body["order"]) and body["order"][0] == self.id
        if msg.type == "CONVOY_PEELOFF":
            cs = self.convoy_cs
            if cs is not None and cs.active and cs.convoy_id == body["convoy_id"]:
                return True
            return body["robot"] == self.id
        if msg.type == "CONVOY_STOP":
            cs = self.convoy_cs
            if cs is not None and cs.convoy_id == body["convoy_id"]:
                return True
            return (
                self.bb.convoy is not None
                and self.bb.convoy["convoy_id"] == body["convoy_id"]
            )
        if msg.type == "CONVOY_GOAL":
            return (
                self.bb.convoy is not None
                and self.bb.convoy["convoy_id"] == body["convoy_id"]
            )
        return True

    def _route(self, msg: WireMessage, out: list, now_ms: int) -> None:
        t = msg.type
        if t in REGISTRY_MSG_TYPES:
            out.extend(self.discovery.handle(msg, now_ms))
            return
        if t == "CONTROL_REQ":
            if msg.body["robot"] == self.id:
                out.extend(
                    self.arbiter.handle_control_request(
                        msg, self.discovery.registry, now_ms
                    )
                )
            return
        if t == "CONTROL_RELEASE":
            if msg.body["robot"] == self.id:
                self.arbiter.handle_release(msg, now_ms)
            return
        if t in COMMAND_TYPES:
            if not self._addressed_to_me(msg):
                return
            leader = self.bb.convoy["leader"] if self.bb.convoy else None
            if self.arbiter.filter_inbound(msg, now_ms, convoy_leader=leader):
                self._dispatch_command(msg, out, now_ms)
            return
        if t == "TELEMETRY" and msg.src != self.id:
            pose = msg.body["pose"]
            self.peer_telemetry[msg.src] = (
                now_ms,
                msg.body.get("path", []),
                (pose[0], pose[1]),
            )

    # --- the per-tick pipeline ---

    def tick(self, tick: int, now_ms: int, frames: list[bytes]) -> list[Envelope]:
        out: list[Envelope] = []

        # ingest: decode, dedup
        msgs = []
        for frame in frames:
            try:
                msg = decode_message(frame)
            except (MalformedFrame, UnknownType, VersionMismatch):
                self.decode_errors += 1
                continue
            if self.arbiter.is_duplicate(msg, now_ms):
                continue
            msgs.append(msg)

        # health first so guards see fresh subsystem state this same tick
        for nh in self.health.tick(now_ms):
            self._reply(
                "HEALTH",
                {
                    "robot": self.id,
                    "node": nh.name,
                    "status": nh.status,
                    "restart_count": nh.restart_count,
                },
                MULTICAST,
                out,
                now_ms,
            )
        self.bb.slam_initialized = self.health.slam_initialized(now_ms)

        # discovery housekeeping
        envs, removed = self.discovery.periodic(now_ms)
        out.extend(envs)
        if removed:
            out.extend(self.arbiter.sweep_holder_liveness(self.discovery.registry, now_ms))
            for rid in removed:
                self.peer_telemetry.pop(rid, None)
            if (
                self.bb.convoy is not None
                and self.bb.convoy["leader"] in removed
                and self.bt.mode == "ConvoyFollower"
            ):
                self.bt.transition("Idle", self.bb, now_ms, "leader_lost")
                self._notify(PRIO_REJECT, "convoy leader lost", out, now_ms)
        if self.convoy_cs is not None and self.convoy_cs.active:
            if self.arbiter.lock.holder is None:
                # operator lock lost while leading: whole convoy stands down
                self._stop_convoy_fanout(out, now_ms)

        # inbound routing (commands see this tick's health/flags)
        for msg in msgs:
            self._route(msg, out, now_ms)

        # sensing + feature service
        if self.bb.slam_initialized and tick % self.config.sense_every_ticks == 0:
            added = sense_and_map(self.world, self.phys, self.known)
            if added:
                self._known_version += 1
            for f in detect_features(self.world, self.phys, self.seen_features):
                self.markers.append({"kind": f.kind, "x": f.x, "y": f.y})
                self._notify(
                    2, f"{f.kind} detected at ({f.x:.1f}, {f.y:.1f})", out, now_ms
                )
        self.known_history.append(self.known.known_count())

        # get-out-of-the-way trigger from peers' broadcast paths
        self._update_getout_trigger(out, now_ms)

        # behavior tree tick (sustained guards, autonomous triggers)
        for note in self.bt.tick(self.bb, now_ms):
            msg = self.sender.make("NOTIFY", note, now_ms)
            out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))

        # directive sources
        sources = self._build_sources(out, now_ms)

        # mux: exactly one directive may reach navigation
        directive, tag = self.bt.mux_route(sources)
        if directive is None and self.bt.stop_pending:
            directive, tag = STOP, "stop"
        self.bt.stop_pending = False
        if directive is not None:
            self.nav_log.append(MuxDecision(now_ms, self.bt.mode, tag, directive))

        # navigation + physics
        twist = self._navigate(directive)
        step_robot(
            self.phys, twist.v, twist.w, self.config.tick_ms / 1000.0, self.world
        )

        # convoy coordination (leader side)
        self._coordinate_convoy(out, now_ms)

        # telemetry egress
        out.extend(
            self.telemetry.build(
                now_ms,
                self._telemetry_body(),
                self.bt.state_body(self.bb, now_ms, self.arbiter.lock.holder),
                self.known,
            )
        )
        return out

    def _update_getout_trigger(self, out: list, now_ms: int) -> None:
        pose_xy = (self.phys.x, self.phys.y)
        fresh = {
            rid: path
            for rid, (ms, path, _pose) in sorted(self.peer_telemetry.items())
            if now_ms - ms <= PEER_PATH_FRESH_MS and path
        }
        if self.bb.getout_path is not None:
            # hysteresis: trip below the trigger clearance, clear only once
            # the full resolution margin holds (otherwise the escape stalls
            # right at the trigger boundary)
            cur = fresh.get(self.bb.getout_requester)
            if cur is None or not path_conflicts(cur, pose_xy, clearance=GETOUT_RESOLVE_M):
                self.bb.getout_path = None
                self.bb.getout_requester = None
                self._getout_stuck_notified = False
                if self.bt.mode == "GetOutOfWay":
                    note = self.bt.complete_goal(self.bb, now_ms, "path clear")
                    msg = self.sender.make("NOTIFY", note, now_ms)
                    out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))
            else:
                self.bb.getout_path = cur
            return
        for rid, path in fresh.items():
            if path_conflicts(path, pose_xy):
                self.bb.getout_path = path
                self.bb.getout_requester = rid
                break

    def _predecessor_too_close(self, now_ms: int) -> bool:
        assign = self.bb.convoy
        if assign is None:
            return False
        idx = assign.get("index", 0)
        if idx <= 0:
            return False
        if idx == 1:
            pred = assign["leader"]
        else:
            pred = next(
                (rid for rid, t in self._convoy_targets.items() if t.get("index") == idx - 1),
                None,
            )
        if pred is None or pred not in self.peer_telemetry:
            return False
        ms, _path, (px, py) = self.peer_telemetry[pred]
        if now_ms - ms > PEER_PATH_FRESH_MS:
            return False
        dx = px - self.phys.x
        dy = py - self.phys.y
        if dx * math.cos(self.phys.theta) + dy * math.sin(self.phys.theta) < 0.0:
            return False  # predecessor is behind; it resolves its own spacing
        headway = assign.get("spacing", 2.0) * CONVOY_MIN_HEADWAY_FRAC
        return math.hypot(dx, dy) <= headway

    def _build_sources(self, out: list, now_ms: int) -> dict:
        sources: dict = {}
        if self.bb.last_joystick is not None and self.bb.joystick_fresh(now_ms):
            fwd, turn = self.bb.last_joystick
            sources["teleop"] = clamp_twist(fwd * V_MAX, turn * W_MAX)
            sources["smart_joystick"] = smart_joystick_directive(
                fwd, turn, self.phys.theta
            )
        if self.bb.goal is not None:
            wd = waypoint_directive(self.bb.goal, (self.phys.x, self.phys.y))
            if wd is REACHED:
                if self.bt.mode == "Waypoint":
                    note = self.bt.complete_goal(self.bb, now_ms, "goal reached")
                    msg = self.sender.make("NOTIFY", note, now_ms)
                    out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))
                else:
                    self.bb.goal = None  # convoy leader finished its leg
            else:
                sources["waypoint"] = wd
        if self.bt.mode == "Exploration":
            res = exploration_step(
                self.known, (self.phys.x, self.phys.y), self.explore, now_ms
            )
            if res is DONE:
                note = self.bt.complete_goal(self.bb, now_ms, "exploration done")
                msg = self.sender.make("NOTIFY", note, now_ms)
                out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))
            else:
                sources["exploration"] = res
        if self.bb.convoy_goal is not None:
            g = self.bb.convoy_goal
            dx = g.x - self.phys.x
            dy = g.y - self.phys.y
            d = math.hypot(dx, dy)
            ahead = dx * math.cos(self.phys.theta) + dy * math.sin(self.phys.theta)
            if d <= g.tolerance or (ahead < 0.0 and d <= CONVOY_HOLD_BEHIND_M):
                sources["convoy"] = STOP
            elif self._predecessor_too_close(now_ms):
                sources["convoy"] = STOP
            else:
                sources["convoy"] = g
        if self.bt.mode == "GetOutOfWay" and self.bb.getout_path is not None:
            res = getout_step(
                self.bb.getout_path, self.inflated_grid(), (self.phys.x, self.phys.y)
            )
            if res is HOLD:
                sources["getout"] = STOP
            elif res is STUCK:
                sources["getout"] = STOP
                if not self._getout_stuck_notified:
                    self._notify(
                        PRIO_REJECT, "cannot clear path: no safe cell", out, now_ms
                    )
                    self._getout_stuck_notified = True
            else:
                sources["getout"] = res
        return sources

    def _navigate(self, directive) -> DirectTwist:
        if directive is None or isinstance(directive, Stop):
            self.selected_path = []
            self._aligning = False
            return DirectTwist(0.0, 0.0)
        if isinstance(directive, DirectTwist):
            self.selected_path = []
            self._aligning = False
            return clamp_twist(directive.v, directive.w)

        if isinstance(directive, GoalPoint):
            bearing = math.atan2(directive.y - self.phys.y, directive.x - self.phys.x)
            err = _wrap(bearing - self.phys.theta)
        else:
            err = _wrap(directive.theta - self.phys.theta)
        if self._aligning:
            if abs(err) <= ALIGN_EXIT_RAD:
                self._aligning = False
        elif abs(err) >= ALIGN_ENTER_RAD:
            self._aligning = True
        if self._aligning:
            self.selected_path = []
            w = max(-W_MAX, min(W_MAX, ALIGN_GAIN * err))
            return DirectTwist(0.0, w)

        selected = nav.score_and_select(
            self.lib, self.inflated_grid(), directive, self.phys.pose
        )
        twist = nav.track(selected, directive, self.phys.pose)
        if isinstance(selected, Stop):
            self.selected_path = []
        else:
            c = math.cos(self.phys.theta)
            s = math.sin(self.phys.theta)
            pts = []
            n = len(selected.xs)
            for k in range(0, n, TELEMETRY_PATH_STRIDE):
                wx = self.phys.x + c * selected.xs[k] - s * selected.ys[k]
                wy = self.phys.y + s * selected.xs[k] + c * selected.ys[k]
                pts.append([round(float(wx), 2), round(float(wy), 2)])
            self.selected_path = pts
        return twist

    def _coordinate_convoy(self, out: list, now_ms: int) -> None:
        cs = self.convoy_cs
        if cs is None or not cs.active or self.bt.mode != "ConvoyLeader":
            return
        cv.record_trail(cs, self.phys.pose, now_ms)
        if (
            self._last_convoy_goal_ms is not None
            and now_ms - self._last_convoy_goal_ms < CONVOY_GOAL_PERIOD_MS
        ):
            return
        targets = cv.follower_waypoints(cs, now_ms)
        if not targets:
            return
        self._last_convoy_goal_ms = now_ms
        for tgt in targets.values():
            dev = _point_to_trail_distance(tgt["x"], tgt["y"], cs.trail)
            self.goal_trail_dev_max = max(self.goal_trail_dev_max, dev)
        body = {
            "convoy_id": cs.convoy_id,
            "leader_s": round(cs.leader_s, 4),
            "targets": {
                rid: {
                    "x": round(t["x"], 4),
                    "y": round(t["y"], 4),
                    "tolerance": t["tolerance"],
                    "index": t["index"],
                }
                for rid, t in targets.items()
            },
        }
        self._reply("CONVOY_GOAL", body, MULTICAST, out, now_ms)

    def _telemetry_body(self) -> dict:
        return {
            "robot": self.id,
            "pose": [
                round(self.phys.x, 3),
                round(self.phys.y, 3),
                round(self.phys.theta, 3),
            ],
            "twist": [round(self.phys.v, 3), round(self.phys.w, 3)],
            "mode": self.bt.mode,
            "battery_ok": self.bb.battery_ok,
            "signal": 1.0,
            "cam": None,
            "path": self.selected_path,
            "markers": list(self.markers),
        }


def _wrap(a: float) -> float:
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def _point_to_trail_distance(x: float, y: float, trail) -> float:
    """Min distance from a point to the trail polyline."""
    if not trail:
        return float("inf")
    if len(trail) == 1:
        return math.hypot(x - trail[0].x, y - trail[0].y)
    best = float("inf")
    for a, b in zip(trail, trail[1:]):
        vx, vy = b.x - a.x, b.y - a.y
        wx, wy = x - a.x, y - a.y
        vv = vx * vx + vy * vy
        t = 0.0 if vv == 0 else max(0.0, min(1.0, (wx * vx + wy * vy) / vv))
        px, py = a.x + t * vx, a.y + t * vy
        best = min(best, math.hypot(x - px, y - py))
    return best
