"""Robot simulation: unicycle physics, raycast mapping, features, health."""

import math

import numpy as np
import pytest

from fleetmux.errors import ScenarioParseError, UnknownNode
from fleetmux.grid import FREE, OCCUPIED, OccupancyGrid
from fleetmux.robot import (
    AUTO_RESTART_AFTER_MS,
    RESTART_DOWNTIME_MS,
    SLAM_BOOT_MS,
    HealthMonitor,
    RobotPhysState,
    World,
    detect_features,
    sense_and_map,
    step_robot,
    wrap_angle,
)

OPEN_WORLD = "\n".join(["." * 60] * 60)


def _world(text=OPEN_WORLD):
    return World.from_text(text)


# --- world file format ---

def test_world_round_trip():
    text = "@resolution 0.1\n@origin 0.0 0.0\n####\n#..#\n####\nfeatures:\nstaircase 0.25 0.15\n"
    w = World.from_text(text)
    assert w.grid.width == 4 and w.grid.height == 3
    assert w.grid.cells[1, 1] == FREE
    assert w.grid.cells[0, 0] == OCCUPIED
    assert len(w.features) == 1 and w.features[0].kind == "staircase"
    assert World.from_text(w.to_text()).grid == w.grid


def test_world_rejects_garbage():
    with pytest.raises(ScenarioParseError):
        World.from_text("..x.\n....")
    with pytest.raises(ScenarioParseError):
        World.from_text("....\n..\n")
    with pytest.raises(ScenarioParseError):
        World.from_text("")


# --- physics ---

def test_forward_step():
    w = _world()
    st = RobotPhysState(1.0, 1.0, 0.0)
    step_robot(st, 1.0, 0.0, 0.05, w)
    assert st.x == pytest.approx(1.05)
    assert st.y == 1.0


def test_rotation_step():
    w = _world()
    st = RobotPhysState(1.0, 1.0, 0.0)
    step_robot(st, 0.0, 1.5, 0.05, w)
    assert st.theta == pytest.approx(0.075)
    assert (st.x, st.y) == (1.0, 1.0)


def test_theta_wraps():
    assert wrap_angle(math.pi + 0.1) == pytest.approx(-math.pi + 0.1)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    w = _world()
    st = RobotPhysState(1.0, 1.0, math.pi - 0.01)
    step_robot(st, 0.0, 1.5, 0.05, w)
    assert -math.pi < st.theta <= math.pi


def test_driving_into_wall_cancels_motion_and_counts():
    rows = ["." * 40] * 40
    rows[10] = "." * 20 + "#" * 20  # wall along row 10 from x=2.0
    w = _world("\n".join(rows))
    st = RobotPhysState(1.5, 1.05, 0.0)
    for _ in range(40):
        step_robot(st, 1.0, 0.0, 0.05, w)
    assert st.collisions > 0
    assert st.x < 2.0  # never penetrated (0.4 m footprint keeps it out)
    assert st.v == 0.0


# --- sensing / mapping ---

def _known_like(w: World) -> OccupancyGrid:
    return OccupancyGrid(w.grid.resolution, w.grid.origin, w.grid.width, w.grid.height)


def test_empty_disc_fully_known_free():
    w = _world()
    st = RobotPhysState(3.0, 3.0, 0.0)
    known = _known_like(w)
    n = sense_and_map(w, st, known)
    assert n > 0
    # every cell within 2.5 m of the robot is known free (well inside range
    # and inside the world)
    for r in range(w.grid.height):
        for c in range(w.grid.width):
            x, y = w.grid.cell_to_world(r, c)
            if math.hypot(x - 3.0, y - 3.0) <= 2.5:
                assert known.cells[r, c] == FREE, (r, c)


def ray_oracle(world, known, x0, y0, angle, max_range):
    """Independent ray walk: expected (free cells, hit cell) along one ray."""
    res = world.grid.resolution
    step = res * 0.5
    frees, hit = [], None
    k = 1
    while k * step <= max_range:
        x = x0 + math.cos(angle) * (k * step)
        y = y0 + math.sin(angle) * (k * step)
        r, c = world.grid.world_to_cell(x, y)
        if not world.grid.in_bounds(r, c):
            break
        if world.grid.cells[r, c] == OCCUPIED:
            hit = (r, c)
            break
        frees.append((r, c))
        k += 1
    return frees, hit


def test_wall_ray_marks_free_cells_then_one_occupied():
    rows = ["." * 80] * 80
    for i in range(80):
        rows[i] = rows[i][:60] + "#" + rows[i][61:]  # wall column at x=6.0
    w = _world("\n".join(rows))
    st = RobotPhysState(3.05, 4.05, 0.0)
    known = _known_like(w)
    sense_and_map(w, st, known)
    frees, hit = ray_oracle(w, known, st.x, st.y, 0.0, 8.0)
    assert hit is not None
    assert known.cells[hit] == OCCUPIED
    for cell in frees:
        assert known.cells[cell] == FREE
    # ~30 distinct free cells along the ~3 m ray before the wall
    assert len(set(frees)) == pytest.approx(30, abs=1)


def test_rescan_idempotent_and_monotone():
    w = _world()
    st = RobotPhysState(3.0, 3.0, 0.0)
    known = _known_like(w)
    sense_and_map(w, st, known)
    snapshot = known.cells.copy()
    added = sense_and_map(w, st, known)
    assert added == 0
    assert np.array_equal(known.cells, snapshot)


def test_known_cells_never_revert():
    w = _world()
    known = _known_like(w)
    counts = []
    for i in range(10):
        st = RobotPhysState(1.0 + i * 0.4, 3.0, 0.0)
        sense_and_map(w, st, known)
        counts.append(known.known_count())
    assert counts == sorted(counts)


# --- features ---

def _feature_world():
    rows = ["." * 100] * 100
    text = "\n".join(rows) + "\nfeatures:\nstaircase 5.0 2.0\n"
    return World.from_text(text)


def test_feature_detected_once():
    w = _feature_world()
    st = RobotPhysState(2.0, 2.0, 0.0)
    seen = set()
    found = detect_features(w, st, seen)
    assert [f.kind for f in found] == ["staircase"]
    assert detect_features(w, st, seen) == []  # deduplicated


def test_feature_behind_wall_not_detected():
    rows = ["." * 100] * 100
    for i in range(100):
        rows[i] = rows[i][:40] + "#" + rows[i][41:]  # wall at x=4.0
    text = "\n".join(rows) + "\nfeatures:\nstaircase 5.0 2.0\n"
    w = World.from_text(text)
    st = RobotPhysState(2.0, 2.0, 0.0)
    assert detect_features(w, st, set()) == []


def test_feature_out_of_range_not_detected():
    w = _feature_world()
    st = RobotPhysState(50.0 , 50.0, 0.0)
    assert detect_features(w, st, set()) == []


# --- health ---

def test_slam_boot_delay():
    hm = HealthMonitor()
    assert not hm.slam_initialized(500)
    assert hm.slam_initialized(SLAM_BOOT_MS)


def test_kill_flips_guard_same_tick():
    hm = HealthMonitor()
    hm.tick(2000)
    assert hm.slam_initialized(2000)
    hm.kill("slam", 2050)
    assert not hm.slam_initialized(2050)
    assert hm.nodes["slam"].status == "dead"


def test_manual_restart_timing():
    hm = HealthMonitor()
    hm.kill("slam", 10_000)
    assert [c.status for c in hm.tick(10_000)] == ["dead"]  # kill reported
    assert hm.request_restart("slam", 10_500)
    changes = hm.tick(10_500)
    assert [c.status for c in changes] == ["degraded"]  # restarting
    changes = hm.tick(10_500 + RESTART_DOWNTIME_MS - 50)
    assert changes == []  # still restarting
    changes = hm.tick(10_500 + RESTART_DOWNTIME_MS)
    assert [c.name for c in changes] == ["slam"]
    assert hm.nodes["slam"].status == "ok"
    assert hm.nodes["slam"].restart_count == 1
    # slam needs its boot delay after revival
    up = 10_500 + RESTART_DOWNTIME_MS
    assert not hm.slam_initialized(up)
    assert hm.slam_initialized(up + SLAM_BOOT_MS)


def test_auto_restart_policy():
    hm = HealthMonitor(auto_restart=True)
    hm.kill("nav", 5000)
    assert [c.status for c in hm.tick(5000)] == ["dead"]
    assert hm.tick(5000 + AUTO_RESTART_AFTER_MS - 50) == []
    changes = hm.tick(5000 + AUTO_RESTART_AFTER_MS)
    assert hm.nodes["nav"].status == "degraded"
    changes = hm.tick(5000 + AUTO_RESTART_AFTER_MS + RESTART_DOWNTIME_MS)
    assert hm.nodes["nav"].status == "ok"


def test_dead_node_emits_no_heartbeats():
    hm = HealthMonitor()
    hm.tick(1000)
    hm.kill("slam", 1500)
    hm.tick(2000)
    assert hm.nodes["slam"].last_heartbeat == 1000


def test_unknown_node_raises():
    hm = HealthMonitor()
    with pytest.raises(UnknownNode):
        hm.kill("warp_drive", 0)
    with pytest.raises(UnknownNode):
        hm.request_restart("warp_drive", 0)
