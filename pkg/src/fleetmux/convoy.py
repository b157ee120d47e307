"""Convoy coordination: leader breadcrumb trail, follower waypoints at fixed
arc-length spacing, peel-off and stop.

The coordinator lives on the lead robot: it records the leader's trail,
interpolates each follower's target along it, and multicasts CONVOY_GOAL.
Follower targets get a speed-scaled lookahead so the tracking controller's
goal-approach slowdown does not open the spacing at cruise speed; with the
leader stopped the lookahead vanishes and followers settle at exactly the
configured spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from fleetmux.errors import NotInConvoy, RobotUnavailable, TooFewRobots
from fleetmux.modes import GOAL_TOLERANCE, V_MAX
from fleetmux.nav import GOAL_SLOWDOWN_DIST

DEFAULT_SPACING = 2.0  # m, arc length along the trail
TRAIL_POINT_SPACING = 0.2  # m, leader movement per recorded breadcrumb
TRAIL_PRUNE_MARGIN = 10.0  # m kept beyond the followers' share
SPEED_EST_WINDOW_MS = 1000


@dataclass
class TrailPoint:
    x: float
    y: float
    s: float  # cumulative arc length
    ms: int


@dataclass
class ConvoyState:
    convoy_id: str
    order: list[str]  # index 0 = leader
    spacing: float = DEFAULT_SPACING
    active: bool = True
    trail: list[TrailPoint] = field(default_factory=list)

    def index_of(self, robot: str) -> int:
        try:
            return self.order.index(robot)
        except ValueError:
            raise NotInConvoy(robot) from None

    @property
    def leader(self) -> str:
        return self.order[0]

    @property
    def leader_s(self) -> float:
        return self.trail[-1].s if self.trail else 0.0


def validate_start(order, registry, bt_states, held) -> None:
    """Basestation-side atomic-start check: every selected robot must be
    known, lock-held by the requester, and offering its convoy role. Raises
    instead of allowing a partial convoy."""
    if len(order) < 2 or len(set(order)) != len(order):
        raise TooFewRobots(f"need >= 2 distinct robots, got {order}")
    for i, rid in enumerate(order):
        rec = registry.get(rid)
        if rec is None or rec.caps.kind != "robot":
            raise RobotUnavailable(rid, "not a known robot")
        if rid not in held:
            raise RobotUnavailable(rid, "control lock not held")
        bt = bt_states.get(rid)
        if bt is None:
            raise RobotUnavailable(rid, "no behavior feedback yet")
        role = "ConvoyLeader" if i == 0 else "ConvoyFollower"
        if role not in bt.get("offered", []):
            reason = bt.get("guard_failures", {}).get(role, "role not offered")
            raise RobotUnavailable(rid, reason)


def start_convoy(cs: ConvoyState, leader_pose) -> ConvoyState:
    """Seed the coordinator's trail at the leader's pose."""
    x, y = leader_pose[0], leader_pose[1]
    cs.trail = [TrailPoint(x, y, 0.0, 0)]
    cs.active = True
    return cs


def record_trail(cs: ConvoyState, leader_pose, now_ms: int) -> ConvoyState:
    """Append a breadcrumb when the leader moved a trail-spacing step;
    prune the tail the followers can no longer need."""
    if not cs.active:
        return cs
    x, y = leader_pose[0], leader_pose[1]
    if not cs.trail:
        cs.trail.append(TrailPoint(x, y, 0.0, now_ms))
        return cs
    last = cs.trail[-1]
    d = math.hypot(x - last.x, y - last.y)
    if d >= TRAIL_POINT_SPACING - 1e-9:  # epsilon guards float drift at the threshold
        cs.trail.append(TrailPoint(x, y, last.s + d, now_ms))
        keep_from = cs.trail[-1].s - (len(cs.order) * cs.spacing + TRAIL_PRUNE_MARGIN)
        while len(cs.trail) > 2 and cs.trail[1].s < keep_from:
            cs.trail.pop(0)
    return cs


def leader_speed_estimate(cs: ConvoyState, now_ms: int) -> float:
    """Trail growth over the last window, m/s."""
    if len(cs.trail) < 2:
        return 0.0
    head = cs.trail[-1]
    cutoff = now_ms - SPEED_EST_WINDOW_MS
    base = cs.trail[0]
    for pt in reversed(cs.trail):
        if pt.ms <= cutoff:
            base = pt
            break
    dt = max(now_ms - base.ms, SPEED_EST_WINDOW_MS) / 1000.0
    return max(0.0, (head.s - base.s) / dt)


def _interpolate(cs: ConvoyState, s: float) -> tuple[float, float]:
    trail = cs.trail
    if s <= trail[0].s:
        return trail[0].x, trail[0].y
    if s >= trail[-1].s:
        return trail[-1].x, trail[-1].y
    for i in range(len(trail) - 1, 0, -1):
        a, b = trail[i - 1], trail[i]
        if a.s <= s <= b.s:
            span = b.s - a.s
            f = 0.0 if span == 0 else (s - a.s) / span
            return a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)
    return trail[-1].x, trail[-1].y


def follower_waypoints(cs: ConvoyState, now_ms: int | None = None) -> dict:
    """Target per follower: the trail point spacing*index behind the leader
    (oldest point when the trail is shorter), plus the speed-scaled
    lookahead. Every target lies on the trail."""
    if not cs.active or not cs.trail:
        return {}
    lookahead = 0.0
    if now_ms is not None:
        est = leader_speed_estimate(cs, now_ms)
        lookahead = GOAL_SLOWDOWN_DIST * min(1.0, est / V_MAX)
    s_leader = cs.leader_s
    out = {}
    for i, rid in enumerate(cs.order):
        if i == 0:
            continue
        target_s = min(s_leader, s_leader - i * cs.spacing + lookahead)
        x, y = _interpolate(cs, target_s)
        out[rid] = {"x": x, "y": y, "tolerance": GOAL_TOLERANCE, "index": i}
    return out


def handle_convoy_command(cs: ConvoyState, cmd_type: str, robot: str | None = None):
    """Apply a STOP or PEELOFF to the coordinator state.

    Returns (removed_robots, stopped): robots that must drop to Idle now,
    and whether the whole convoy deactivated."""
    if cmd_type == "CONVOY_STOP":
        cs.active = False
        return list(cs.order), True
    if cmd_type == "CONVOY_PEELOFF":
        idx = cs.index_of(robot)
        cs.order.pop(idx)
        if idx == 0 or len(cs.order) < 2:
            cs.active = False
            return [robot] + list(cs.order), True
        return [robot], False
    raise ValueError(f"not a convoy command: {cmd_type}")
