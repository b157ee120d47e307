"""Convoy coordinator: trail recording, follower interpolation, peel-off."""

import math

import pytest

from fleetmux.convoy import (
    ConvoyState,
    follower_waypoints,
    handle_convoy_command,
    leader_speed_estimate,
    record_trail,
    start_convoy,
    validate_start,
)
from fleetmux.discovery import Registry
from fleetmux.errors import NotInConvoy, RobotUnavailable, TooFewRobots
from fleetmux.protocol import AgentRecord, Capabilities

ROBOT_CAPS = Capabilities(
    kind="robot", modes=("Manual", "ConvoyLeader", "ConvoyFollower", "Idle")
)


def _registry(*robots):
    reg = Registry(own_id="base1")
    for r in robots:
        reg.upsert(AgentRecord(r, ROBOT_CAPS), 0)
    return reg


def _bt(offered):
    return {"offered": list(offered), "guard_failures": {}}


def _eligible_bts(*robots):
    return {r: _bt(["Idle", "ConvoyLeader", "ConvoyFollower"]) for r in robots}


def _cs(order=("r1", "r2", "r3"), spacing=2.0):
    cs = ConvoyState("cv-1", list(order), spacing)
    start_convoy(cs, (0.0, 0.0, 0.0))
    return cs


# --- start validation (basestation-side, atomic) ---

def test_valid_start_passes():
    reg = _registry("r1", "r2", "r3")
    validate_start(["r1", "r2", "r3"], reg, _eligible_bts("r1", "r2", "r3"), {"r1", "r2", "r3"})


def test_single_robot_too_few():
    reg = _registry("r1")
    with pytest.raises(TooFewRobots):
        validate_start(["r1"], reg, _eligible_bts("r1"), {"r1"})


def test_guard_failure_aborts_whole_start():
    reg = _registry("r1", "r2", "r3")
    bts = _eligible_bts("r1", "r3")
    bts["r2"] = {"offered": ["Idle"], "guard_failures": {"ConvoyFollower": "SLAM not initialized"}}
    with pytest.raises(RobotUnavailable) as exc:
        validate_start(["r1", "r2", "r3"], reg, bts, {"r1", "r2", "r3"})
    assert exc.value.robot == "r2"
    assert "SLAM" in exc.value.reason


def test_unheld_robot_aborts():
    reg = _registry("r1", "r2")
    with pytest.raises(RobotUnavailable):
        validate_start(["r1", "r2"], reg, _eligible_bts("r1", "r2"), {"r1"})


# --- trail recording ---

def test_stationary_leader_leaves_trail_unchanged():
    cs = _cs()
    record_trail(cs, (0.0, 0.0, 0.0), 100)
    record_trail(cs, (0.05, 0.0, 0.0), 200)  # below the 0.2 m threshold
    assert len(cs.trail) == 1


def test_one_meter_line_adds_five_points():
    cs = _cs()
    now = 0
    for i in range(1, 51):  # 2 cm steps, 1.0 m total
        now += 50
        record_trail(cs, (i * 0.02, 0.0, 0.0), now)
    assert len(cs.trail) == 6  # seed + 5 new points
    ds = [b.s - a.s for a, b in zip(cs.trail, cs.trail[1:])]
    assert all(d == pytest.approx(0.2, abs=1e-6) for d in ds)
    assert cs.trail[-1].s == pytest.approx(1.0, abs=1e-6)


def test_trail_pruned_to_needed_length():
    cs = _cs()
    now = 0
    for i in range(1, 1001):  # 200 m straight line
        now += 50
        record_trail(cs, (i * 0.2, 0.0, 0.0), now)
    length = cs.trail[-1].s - cs.trail[0].s
    assert length <= len(cs.order) * cs.spacing + 10.0 + 0.4  # margin + one step


# --- follower targets ---

def test_straight_trail_targets_at_spacing_behind():
    cs = _cs()
    now = 0
    for i in range(1, 31):  # 6 m in 0.2 m steps
        now += 1000  # slow: 0.2 m/s keeps the speed lookahead negligible
        record_trail(cs, (i * 0.2, 0.0, 0.0), now)
    assert cs.leader_s == pytest.approx(6.0)
    targets = follower_waypoints(cs)  # no timing context: pure interpolation
    assert targets["r2"]["x"] == pytest.approx(4.0, abs=1e-9)
    assert targets["r3"]["x"] == pytest.approx(2.0, abs=1e-9)
    assert targets["r2"]["index"] == 1 and targets["r3"]["index"] == 2


def test_short_trail_targets_oldest_point():
    cs = _cs()
    record_trail(cs, (0.5, 0.0, 0.0), 1000)
    record_trail(cs, (1.0, 0.0, 0.0), 2000)  # trail 1 m, follower 2 needs 4 m
    targets = follower_waypoints(cs)
    assert (targets["r3"]["x"], targets["r3"]["y"]) == (0.0, 0.0)


def _min_dist_to_polyline(x, y, pts):
    best = math.inf
    for (ax, ay), (bx, by) in zip(pts, pts[1:]):
        vx, vy = bx - ax, by - ay
        vv = vx * vx + vy * vy
        t = 0.0 if vv == 0 else max(0.0, min(1.0, ((x - ax) * vx + (y - ay) * vy) / vv))
        best = min(best, math.hypot(x - (ax + t * vx), y - (ay + t * vy)))
    return best


def test_u_turn_goals_lie_on_trail_not_chord():
    cs = _cs(order=("r1", "r2"))
    now = 0
    # up 4 m, then back down 4 m displaced 0.4 m right: a hairpin
    poses = [(0.0, i * 0.2, 0.0) for i in range(1, 21)]
    poses += [(0.4, 4.0 - i * 0.2, 0.0) for i in range(1, 21)]
    for p in poses:
        now += 1000
        record_trail(cs, p, now)
    targets = follower_waypoints(cs)
    t = targets["r2"]
    pts = [(tp.x, tp.y) for tp in cs.trail]
    assert _min_dist_to_polyline(t["x"], t["y"], pts) <= 0.05
    # the chord midpoint between leader and a 2 m-back straight-line guess
    # would sit between the two legs; the trail target must not
    leader = cs.trail[-1]
    assert math.hypot(t["x"] - leader.x, t["y"] - leader.y) <= 2.0 + 1e-6


def test_speed_lookahead_caps_at_leader_position():
    cs = _cs(order=("r1", "r2"))
    now = 0
    for i in range(1, 61):  # 12 m at 1 m/s: 0.2 m per 200 ms
        now += 200
        record_trail(cs, (i * 0.2, 0.0, 0.0), now)
    est = leader_speed_estimate(cs, now)
    assert est == pytest.approx(1.0, abs=0.05)
    targets = follower_waypoints(cs, now)
    # spacing 2.0 with ~1.0 lookahead: target ~1 m behind the leader, on-trail
    behind = cs.leader_s - targets["r2"]["x"]
    assert 0.8 <= behind <= 1.2
    assert targets["r2"]["x"] <= cs.leader_s


def test_static_trail_has_no_lookahead():
    cs = _cs(order=("r1", "r2"))
    now = 0
    for i in range(1, 31):
        now += 1000
        record_trail(cs, (i * 0.2, 0.0, 0.0), now)
    # a long silent gap: the speed estimate window sees no growth
    targets = follower_waypoints(cs, now + 60_000)
    assert cs.leader_s - targets["r2"]["x"] == pytest.approx(2.0, abs=1e-6)


# --- stop / peel-off ---

def test_peeloff_follower_reindexes():
    cs = _cs()
    removed, stopped = handle_convoy_command(cs, "CONVOY_PEELOFF", "r2")
    assert removed == ["r2"] and not stopped
    assert cs.order == ["r1", "r3"]
    record_trail(cs, (5.0, 0.0, 0.0), 1000)
    targets = follower_waypoints(cs)
    assert targets["r3"]["index"] == 1  # r3 moved up


def test_peeloff_leader_stops_convoy():
    cs = _cs()
    removed, stopped = handle_convoy_command(cs, "CONVOY_PEELOFF", "r1")
    assert stopped and not cs.active
    assert set(removed) == {"r1", "r2", "r3"}


def test_peeloff_below_two_stops():
    cs = _cs(order=("r1", "r2"))
    removed, stopped = handle_convoy_command(cs, "CONVOY_PEELOFF", "r2")
    assert stopped and not cs.active


def test_stop_deactivates_all():
    cs = _cs()
    removed, stopped = handle_convoy_command(cs, "CONVOY_STOP")
    assert stopped and set(removed) == {"r1", "r2", "r3"}
    assert not cs.active
    assert follower_waypoints(cs) == {}


def test_peeloff_unknown_robot():
    cs = _cs()
    with pytest.raises(NotInConvoy):
        handle_convoy_command(cs, "CONVOY_PEELOFF", "r9")
    assert cs.order == ["r1", "r2", "r3"]
    assert cs.active
