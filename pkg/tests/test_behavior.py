"""Behavior tree: guard table, mode transitions, mux routing, offered set."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fleetmux.behavior import (
    REASON_JOYSTICK,
    REASON_NO_GOAL,
    REASON_SLAM,
    REASON_UNKNOWN_MODE,
    BehaviorTree,
    Blackboard,
    evaluate_guard,
    load_tree,
)
from fleetmux.modes import DirectTwist, GoalPoint, HeadingIntent

ALL_MODES = (
    "Idle", "Manual", "SmartJoystick", "Waypoint", "Exploration",
    "ConvoyLeader", "ConvoyFollower", "GetOutOfWay",
)


def _bb(slam=True, joy_age=0, now=1000):
    bb = Blackboard()
    bb.slam_initialized = slam
    bb.last_joystick_at = now - joy_age
    bb.last_joystick = (1.0, 0.0)
    return bb


def _bt(modes=ALL_MODES):
    return BehaviorTree("r1", modes)


def _req(mode, goal=None, convoy=None):
    return {"robot": "r1", "mode": mode, "goal": goal, "convoy": convoy}


GOAL = {"x": 5.0, "y": 5.0, "tolerance": 0.3}
ASSIGN = {"convoy_id": "cv-1", "leader": "r9", "index": 1, "spacing": 2.0, "role": "follower"}


# --- guard table rows ---

def test_manual_guard_always_ok():
    assert evaluate_guard("Manual", Blackboard(), 0) is None


def test_smart_joystick_stale_joystick():
    bb = _bb(slam=True, joy_age=600)
    assert evaluate_guard("SmartJoystick", bb, 1000) == REASON_JOYSTICK


def test_smart_joystick_slam_down():
    bb = _bb(slam=False, joy_age=0)
    assert evaluate_guard("SmartJoystick", bb, 1000) == REASON_SLAM


def test_slam_reason_takes_precedence_when_both_fail():
    bb = _bb(slam=False, joy_age=600)
    assert evaluate_guard("SmartJoystick", bb, 1000) == REASON_SLAM


def test_joystick_exactly_at_threshold_is_fresh():
    bb = _bb(joy_age=500)
    assert evaluate_guard("SmartJoystick", bb, 1000) is None


# --- mode requests ---

def test_waypoint_request_with_goal_acks_and_stores_goal():
    bt, bb = _bt(), _bb()
    verdict, body = bt.handle_mode_request(_req("Waypoint", goal=GOAL), bb, 1000)
    assert verdict == "MODE_ACK"
    assert bt.mode == "Waypoint"
    assert bb.goal == GoalPoint(5.0, 5.0, 0.3)
    assert bt.designated_source() == "waypoint"


def test_waypoint_request_without_goal_rejected():
    bt, bb = _bt(), _bb()
    verdict, body = bt.handle_mode_request(_req("Waypoint"), bb, 1000)
    assert verdict == "MODE_REJECT"
    assert body["reason"] == REASON_NO_GOAL
    assert bt.mode == "Idle"


def test_autonomy_slides_down_from_waypoint_to_smart_joystick():
    bt, bb = _bt(), _bb()
    bt.handle_mode_request(_req("Waypoint", goal=GOAL), bb, 1000)
    verdict, _ = bt.handle_mode_request(_req("SmartJoystick"), bb, 1100)
    assert verdict == "MODE_ACK"
    assert bt.mode == "SmartJoystick"
    assert bb.goal is None  # waypoint exit hook cleared the goal


def test_rejected_request_changes_nothing():
    bt, bb = _bt(), _bb()
    bt.handle_mode_request(_req("Waypoint", goal=GOAL), bb, 1000)
    before = (bt.mode, bt.designated_source(), bb.goal)
    bb2 = _bb(joy_age=600)
    bb2.goal = bb.goal
    verdict, body = bt.handle_mode_request(_req("SmartJoystick"), bb2, 2000)
    assert verdict == "MODE_REJECT"
    assert body["reason"] == REASON_JOYSTICK
    assert (bt.mode, bt.designated_source(), bb2.goal) == before


def test_unknown_mode_rejected():
    bt, bb = _bt(), _bb()
    verdict, body = bt.handle_mode_request(_req("Teleport"), bb, 0)
    assert verdict == "MODE_REJECT"
    assert body["reason"] == REASON_UNKNOWN_MODE


def test_unsupported_mode_rejected():
    bt = _bt(modes=("Idle", "Manual"))
    verdict, body = bt.handle_mode_request(_req("Exploration"), _bb(), 0)
    assert verdict == "MODE_REJECT"
    assert "not supported" in body["reason"]


def test_convoy_follower_requires_assignment():
    bt, bb = _bt(), _bb()
    verdict, _ = bt.handle_mode_request(_req("ConvoyFollower"), bb, 0)
    assert verdict == "MODE_REJECT"
    verdict, _ = bt.handle_mode_request(_req("ConvoyFollower", convoy=ASSIGN), bb, 0)
    assert verdict == "MODE_ACK"
    assert bb.convoy == ASSIGN


# --- per-tick behavior ---

def test_sustained_guard_failure_falls_back_to_idle_with_notify():
    bt, bb = _bt(), _bb()
    bt.handle_mode_request(_req("SmartJoystick"), bb, 1000)
    assert bt.mode == "SmartJoystick"
    notes = bt.tick(bb, 1501)  # joystick now 501 ms old
    assert bt.mode == "Idle"
    assert bt.stop_pending  # Stop emitted on entry to Idle
    assert len(notes) == 1 and REASON_JOYSTICK in notes[0]["text"]


def test_getout_preempts_only_from_idle():
    bt, bb = _bt(), _bb()
    bb.getout_path = [(0.0, 0.0)]
    bt.tick(bb, 0)
    assert bt.mode == "GetOutOfWay"

    bt2, bb2 = _bt(), _bb()
    bt2.handle_mode_request(_req("Manual"), bb2, 0)
    bb2.getout_path = [(0.0, 0.0)]
    bt2.tick(bb2, 100)
    assert bt2.mode == "Manual"  # no autonomous preemption outside Idle


def test_goal_completion_returns_to_idle():
    bt, bb = _bt(), _bb()
    bt.handle_mode_request(_req("Waypoint", goal=GOAL), bb, 0)
    note = bt.complete_goal(bb, 500, "goal reached")
    assert bt.mode == "Idle"
    assert note["text"] == "goal reached"
    assert note["priority"] == 2


# --- mux ---

def test_mux_selects_designated_source_only():
    bt, bb = _bt(), _bb()
    bt.handle_mode_request(_req("Waypoint", goal=GOAL), bb, 0)
    sources = {"waypoint": GoalPoint(5.0, 5.0), "teleop": DirectTwist(1.0, 0.0)}
    directive, tag = bt.mux_route(sources)
    assert directive == GoalPoint(5.0, 5.0)
    assert tag == "waypoint"


def test_mux_idle_returns_none():
    bt = _bt()
    directive, tag = bt.mux_route({"teleop": DirectTwist(1.0, 0.0), "waypoint": GoalPoint(1, 1)})
    assert directive is None and tag is None


def test_mux_manual_passthrough():
    bt, bb = _bt(), _bb()
    bt.handle_mode_request(_req("Manual"), bb, 0)
    directive, tag = bt.mux_route({"teleop": DirectTwist(0.5, 0.2)})
    assert directive == DirectTwist(0.5, 0.2) and tag == "teleop"


def test_mux_convoy_leader_follows_submode():
    bt, bb = _bt(), _bb()
    assign = dict(ASSIGN, role="leader", index=0, leader="r1")
    bt.handle_mode_request(_req("ConvoyLeader", convoy=assign), bb, 0)
    sources = {
        "teleop": DirectTwist(1.0, 0.0),
        "smart_joystick": HeadingIntent(0.0, 1.0),
        "waypoint": GoalPoint(3.0, 3.0),
    }
    assert bt.mux_route(sources) == (DirectTwist(1.0, 0.0), "teleop")
    bt.leader_submode = "waypoint"
    assert bt.mux_route(sources) == (GoalPoint(3.0, 3.0), "waypoint")
    bt.leader_submode = "smart_joystick"
    assert bt.mux_route(sources) == (HeadingIntent(0.0, 1.0), "smart_joystick")


def test_mode_and_mux_channel_never_disagree():
    bt, bb = _bt(), _bb()
    for mode, src in [("Manual", "teleop"), ("Exploration", "exploration"), ("Idle", None)]:
        bt.handle_mode_request(_req(mode), bb, 0)
        assert bt.mode == mode
        assert bt.designated_source() == src


# --- offered set ---

def test_offered_excludes_failing_guards():
    bt = _bt()
    bb = _bb(slam=False, joy_age=600)
    offered, failures = bt.offered(bb, 1000)
    assert "Manual" in offered and "Idle" in offered
    assert "SmartJoystick" not in offered
    assert failures["SmartJoystick"] == REASON_SLAM
    assert "Exploration" not in offered
    # parameterized modes count as satisfiable only when slam is up
    assert "Waypoint" not in offered


def test_offered_with_slam_includes_parameterized_modes():
    bt = _bt()
    offered, _ = bt.offered(_bb(), 1000)
    assert {"Waypoint", "Exploration", "ConvoyLeader", "ConvoyFollower"} <= set(offered)


@settings(max_examples=200, deadline=None)
@given(
    slam=st.booleans(),
    joy_age=st.integers(min_value=0, max_value=2000),
    getout=st.booleans(),
    mode=st.sampled_from([m for m in ALL_MODES]),
)
def test_offered_soundness_property(slam, joy_age, getout, mode):
    """Anything offered, requested in the same tick with the same blackboard
    (plus request parameters), is ACKed; anything failing is REJECTed."""
    now = 10_000
    bt = _bt()
    bb = _bb(slam=slam, joy_age=joy_age, now=now)
    bb.getout_path = [(0.0, 0.0)] if getout else None
    offered, failures = bt.offered(bb, now)
    assert set(offered).isdisjoint(failures)
    req = _req(mode, goal=GOAL if mode == "Waypoint" else None,
               convoy=ASSIGN if mode.startswith("Convoy") else None)
    verdict, body = bt.handle_mode_request(req, bb, now)
    if mode in offered:
        assert verdict == "MODE_ACK"
    else:
        assert verdict == "MODE_REJECT"
        assert body["reason"] == failures[mode]


def test_tree_config_loads_and_validates(tmp_path):
    tree = load_tree()
    assert {e["mode"] for e in tree} == set(ALL_MODES)
    bad = tmp_path / "tree.json"
    bad.write_text('{"modes": [{"mode": "Idle", "guards": ["nope"], "source": null}]}')
    with pytest.raises(ValueError):
        load_tree(bad)
    no_idle = tmp_path / "tree2.json"
    no_idle.write_text('{"modes": [{"mode": "Manual", "guards": ["always"], "source": "teleop"}]}')
    with pytest.raises(ValueError):
        load_tree(no_idle)
