"""Per-robot behavior tree: guards mode requests, owns the active mode, and
drives the mux that feeds the navigation layer.

The tree is a selector over mode subtrees, each a guard chain plus an
action (directive source). It is declared in behavior_tree.json so adding a
mode is a config entry plus one source implementation. The mux channel is
the active mode itself, so mode and channel can never disagree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from fleetmux.modes import GoalPoint, JOYSTICK_STALE_MS

REASON_SLAM = "SLAM not initialized"
REASON_JOYSTICK = "joystick stale"
REASON_NO_GOAL = "no goal attached"
REASON_NO_CONVOY = "no convoy assignment"
REASON_NO_TRIGGER = "no get-out trigger"
REASON_CONVOY_SILENT = "convoy leader silent"
REASON_UNKNOWN_MODE = "unknown mode"
REASON_UNSUPPORTED = "mode not supported by this platform"

# A follower that stops hearing CONVOY_GOAL for this long stands down; it
# covers the partial-start race (leader rejected, followers acked) and a
# leader that dies without deregistering.
CONVOY_GOAL_TIMEOUT_MS = 2000

LEADER_SUBMODES = ("teleop", "smart_joystick", "waypoint")

PRIO_REJECT = 1
PRIO_INFO = 2


@dataclass
class Blackboard:
    """Guard inputs; all readable without side effects."""

    slam_initialized: bool = False
    last_joystick_at: int = -(10**9)  # ms
    last_joystick: tuple[float, float] | None = None  # (fwd, turn)
    battery_ok: bool = True
    goal: GoalPoint | None = None
    convoy: dict | None = None  # {convoy_id, leader, index, spacing, role}
    convoy_goal: GoalPoint | None = None
    last_convoy_goal_at: int = -(10**9)  # ms; seeded at follower entry (grace)
    getout_path: list | None = None
    getout_requester: str | None = None

    def joystick_fresh(self, now_ms: int) -> bool:
        return now_ms - self.last_joystick_at <= JOYSTICK_STALE_MS


# Guard table. Each guard returns None (ok) or a reason string. ctx carries
# the evaluation kind: a concrete request (with its goal/convoy payload), the
# sustained check of the active mode, or the offered-set computation where
# request-supplied parameters count as satisfiable.
def _g_always(bb, now_ms, ctx):
    return None


def _g_slam(bb, now_ms, ctx):
    return None if bb.slam_initialized else REASON_SLAM


def _g_joystick(bb, now_ms, ctx):
    return None if bb.joystick_fresh(now_ms) else REASON_JOYSTICK


def _g_goal(bb, now_ms, ctx):
    if ctx["kind"] == "offer":
        return None  # the operator supplies a goal with the request
    if ctx["kind"] == "request":
        return None if ctx.get("goal") is not None else REASON_NO_GOAL
    return None if bb.goal is not None else REASON_NO_GOAL


def _g_convoy(bb, now_ms, ctx):
    if ctx["kind"] == "offer":
        return None  # the assignment arrives with the request
    if ctx["kind"] == "request":
        return None if ctx.get("convoy") is not None else REASON_NO_CONVOY
    return None if bb.convoy is not None else REASON_NO_CONVOY


def _g_convoy_goal_fresh(bb, now_ms, ctx):
    if ctx["kind"] != "sustain":
        return None  # entry seeds the grace window
    if now_ms - bb.last_convoy_goal_at <= CONVOY_GOAL_TIMEOUT_MS:
        return None
    return REASON_CONVOY_SILENT


def _g_getout(bb, now_ms, ctx):
    return None if bb.getout_path is not None else REASON_NO_TRIGGER


GUARDS = {
    "always": _g_always,
    "slam_ready": _g_slam,
    "joystick_fresh": _g_joystick,
    "goal_attached": _g_goal,
    "convoy_assigned": _g_convoy,
    "convoy_goal_fresh": _g_convoy_goal_fresh,
    "getout_triggered": _g_getout,
}


def load_tree(path=None) -> list[dict]:
    """Load and validate the declarative mode tree (selector order)."""
    if path is None:
        text = resources.files("fleetmux").joinpath("behavior_tree.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    cfg = json.loads(text)
    entries = cfg["modes"]
    seen = set()
    for e in entries:
        if e["mode"] in seen:
            raise ValueError(f"duplicate mode {e['mode']}")
        seen.add(e["mode"])
        for g in e["guards"]:
            if g not in GUARDS:
                raise ValueError(f"unknown guard {g!r} for mode {e['mode']}")
    if "Idle" not in seen:
        raise ValueError("tree must define Idle")
    return entries


def evaluate_guard(mode: str, bb: Blackboard, now_ms: int, ctx=None, tree=None) -> str | None:
    """First failing guard's reason for a mode, or None when all pass."""
    entries = tree if tree is not None else _DEFAULT_TREE
    ctx = ctx or {"kind": "sustain"}
    for e in entries:
        if e["mode"] != mode:
            continue
        for g in e["guards"]:
            reason = GUARDS[g](bb, now_ms, ctx)
            if reason:
                return reason
        return None
    return REASON_UNKNOWN_MODE


_DEFAULT_TREE = load_tree()


@dataclass(frozen=True)
class Transition:
    ms: int
    from_mode: str
    to_mode: str
    cause: str


@dataclass
class MuxDecision:
    tick_ms: int
    mode: str
    source: str
    directive: object


class BehaviorTree:
    """Central authority for one robot's operational mode."""

    def __init__(self, robot_id: str, supported_modes, tree=None):
        self.robot_id = robot_id
        self.supported = tuple(supported_modes)
        self.tree = tree if tree is not None else _DEFAULT_TREE
        self.mode = "Idle"
        self.leader_submode = "teleop"
        self.transitions: list[Transition] = []
        self.stop_pending = False  # a Stop directive is emitted on entry to Idle

    # --- mode switching ---

    def _entry(self, mode: str, bb: Blackboard, goal, convoy, now_ms: int):
        if mode == "Idle":
            self.stop_pending = True
            return
        # leaving Idle again before the mux ran supersedes the entry Stop:
        # the new mode's source decides the directive from here on
        self.stop_pending = False
        if mode == "Waypoint":
            bb.goal = goal
        elif mode in ("ConvoyLeader", "ConvoyFollower"):
            bb.convoy = convoy
            bb.last_convoy_goal_at = now_ms  # grace until goals flow

    def _exit(self, mode: str, bb: Blackboard):
        if mode == "Waypoint":
            bb.goal = None
        elif mode in ("ConvoyLeader", "ConvoyFollower"):
            bb.convoy = None
            bb.convoy_goal = None
            self.leader_submode = "teleop"

    def transition(self, new_mode: str, bb: Blackboard, now_ms: int, cause: str,
                   goal=None, convoy=None):
        old = self.mode
        self._exit(old, bb)
        self._entry(new_mode, bb, goal, convoy, now_ms)
        self.mode = new_mode
        self.transitions.append(Transition(now_ms, old, new_mode, cause))

    # --- request handling ---

    def handle_mode_request(self, req_body: dict, bb: Blackboard, now_ms: int):
        """Returns ("MODE_ACK"|"MODE_REJECT", body). A rejected request
        never changes mode, mux channel, or goals."""
        mode = req_body["mode"]
        reject = {"robot": self.robot_id, "mode": mode}
        if mode not in {e["mode"] for e in self.tree}:
            reject["reason"] = REASON_UNKNOWN_MODE
            return "MODE_REJECT", reject
        if mode not in self.supported:
            reject["reason"] = REASON_UNSUPPORTED
            return "MODE_REJECT", reject
        goal_body = req_body.get("goal")
        goal = (
            GoalPoint(goal_body["x"], goal_body["y"], goal_body["tolerance"])
            if goal_body
            else None
        )
        convoy = req_body.get("convoy")
        ctx = {"kind": "request", "goal": goal, "convoy": convoy}
        reason = evaluate_guard(mode, bb, now_ms, ctx, self.tree)
        if reason:
            reject["reason"] = reason
            return "MODE_REJECT", reject
        self.transition(mode, bb, now_ms, "request", goal=goal, convoy=convoy)
        return "MODE_ACK", {"robot": self.robot_id, "mode": mode}

    # --- per-tick work ---

    def tick(self, bb: Blackboard, now_ms: int) -> list[dict]:
        """Sustained-condition check, autonomous triggers. Returns NOTIFY
        bodies for any fallback taken this tick."""
        notifies = []
        if self.mode != "Idle":
            reason = evaluate_guard(self.mode, bb, now_ms, {"kind": "sustain"}, self.tree)
            if reason:
                dropped = self.mode
                self.transition("Idle", bb, now_ms, f"guard:{reason}")
                notifies.append(
                    {
                        "robot": self.robot_id,
                        "priority": PRIO_REJECT,
                        "text": f"mode {dropped} dropped: {reason}",
                    }
                )
        if self.mode == "Idle" and bb.getout_path is not None and "GetOutOfWay" in self.supported:
            self.transition("GetOutOfWay", bb, now_ms, "autonomous")
        return notifies

    def complete_goal(self, bb: Blackboard, now_ms: int, text: str) -> dict:
        """Active goal finished (waypoint reached, exploration done, path
        cleared): back to Idle with an informational NOTIFY."""
        self.transition("Idle", bb, now_ms, "complete")
        return {"robot": self.robot_id, "priority": PRIO_INFO, "text": text}

    # --- mux ---

    def designated_source(self) -> str | None:
        for e in self.tree:
            if e["mode"] == self.mode:
                src = e["source"]
                if src == "leader_submode":
                    return self.leader_submode
                return src
        return None

    def mux_route(self, sources: dict):
        """Forward exactly the directive from the mode's designated source;
        everything else is discarded this tick."""
        tag = self.designated_source()
        if tag is None:
            return None, None
        directive = sources.get(tag)
        if directive is None:
            return None, None
        return directive, tag

    # --- feedback ---

    def offered(self, bb: Blackboard, now_ms: int):
        offered = []
        failures = {}
        for e in self.tree:
            mode = e["mode"]
            if mode not in self.supported:
                continue
            reason = evaluate_guard(mode, bb, now_ms, {"kind": "offer"}, self.tree)
            if reason:
                failures[mode] = reason
            else:
                offered.append(mode)
        return offered, failures

    def state_body(self, bb: Blackboard, now_ms: int, authorized: str | None) -> dict:
        offered, failures = self.offered(bb, now_ms)
        convoy = None
        if bb.convoy is not None:
            convoy = {
                "convoy_id": bb.convoy["convoy_id"],
                "role": bb.convoy.get("role", "follower"),
                "index": bb.convoy["index"],
            }
        return {
            "robot": self.robot_id,
            "mode": self.mode,
            "authorized": authorized,
            "convoy": convoy,
            "offered": offered,
            "guard_failures": failures,
        }
