"""Per-robot simulation: unicycle physics, ground-truth world, raycast
mapping stub, annotated staircase features, and node-health simulation.

Pose truth plus scan integration stands in for SLAM; what matters to the
stack under test is the slam_initialized flag and its failure modes, which
the health monitor drives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fleetmux import kernels
from fleetmux.errors import ScenarioParseError, UnknownNode
from fleetmux.grid import FREE, OCCUPIED, OccupancyGrid
from fleetmux.nav import ROBOT_RADIUS

SENSE_RANGE = 8.0  # m
N_RAYS = 240
SLAM_BOOT_MS = 1000
RESTART_DOWNTIME_MS = 1000
AUTO_RESTART_AFTER_MS = 2000
DEFAULT_NODES = ("slam", "nav")


@dataclass
class Feature:
    kind: str
    x: float
    y: float
    polygon: tuple = ()


class World:
    """Static ground truth: occupancy (free/occupied) plus annotated
    features (staircases) rendered as operator markers when detected."""

    def __init__(self, grid: OccupancyGrid, features=()):
        self.grid = grid
        self.features = list(features)

    @classmethod
    def from_text(cls, text: str) -> "World":
        resolution = 0.1
        origin = (0.0, 0.0)
        rows = []
        features = []
        in_features = False
        for raw in text.splitlines():
            line = raw.rstrip("\n")
            if not in_features:
                if line.startswith("@resolution"):
                    resolution = float(line.split()[1])
                    continue
                if line.startswith("@origin"):
                    parts = line.split()
                    origin = (float(parts[1]), float(parts[2]))
                    continue
                if line.strip() == "features:":
                    in_features = True
                    continue
                if not line.strip():
                    continue
                if set(line) - {".", "#"}:
                    raise ScenarioParseError(f"bad grid row: {line!r}")
                rows.append(line)
            else:
                if not line.strip():
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise ScenarioParseError(f"bad feature line: {line!r}")
                kind, xs, ys = parts
                x, y = float(xs), float(ys)
                half = 0.2
                poly = ((x - half, y - half), (x + half, y - half),
                        (x + half, y + half), (x - half, y + half))
                features.append(Feature(kind, x, y, poly))
        if not rows:
            raise ScenarioParseError("world has no grid rows")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ScenarioParseError("ragged grid rows")
        cells = np.full((len(rows), width), FREE, dtype=np.uint8)
        for r, row in enumerate(rows):
            for c, ch in enumerate(row):
                if ch == "#":
                    cells[r, c] = OCCUPIED
        grid = OccupancyGrid(resolution, origin, width, len(rows), cells)
        return cls(grid, features)

    @classmethod
    def from_file(cls, path) -> "World":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self) -> str:
        lines = [f"@resolution {self.grid.resolution}",
                 f"@origin {self.grid.origin[0]} {self.grid.origin[1]}"]
        for r in range(self.grid.height):
            lines.append(
                "".join("#" if self.grid.cells[r, c] == OCCUPIED else "."
                        for c in range(self.grid.width))
            )
        if self.features:
            lines.append("features:")
            for f in self.features:
                lines.append(f"{f.kind} {f.x} {f.y}")
        return "\n".join(lines) + "\n"

    def occupied_near(self, x: float, y: float, radius: float = ROBOT_RADIUS) -> bool:
        """Any occupied (or out-of-world) cell center within radius."""
        g = self.grid
        r0, c0 = g.world_to_cell(x, y)
        span = int(math.ceil(radius / g.resolution))
        for r in range(r0 - span, r0 + span + 1):
            for c in range(c0 - span, c0 + span + 1):
                if not g.in_bounds(r, c):
                    return True
                if g.cells[r, c] != OCCUPIED:
                    continue
                cx, cy = g.cell_to_world(r, c)
                if (cx - x) ** 2 + (cy - y) ** 2 <= radius * radius:
                    return True
        return False


@dataclass
class RobotPhysState:
    x: float
    y: float
    theta: float
    v: float = 0.0
    w: float = 0.0
    collisions: int = 0

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.theta)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


def step_robot(state: RobotPhysState, v: float, w: float, dt_s: float, world: World) -> None:
    """Unicycle step; motion into an occupied cell is cancelled (the robot
    stops in place and the collision counter increments)."""
    nx = state.x + v * math.cos(state.theta) * dt_s
    ny = state.y + v * math.sin(state.theta) * dt_s
    ntheta = wrap_angle(state.theta + w * dt_s)
    moved = nx != state.x or ny != state.y
    if moved and world.occupied_near(nx, ny):
        state.v = 0.0
        state.w = 0.0
        state.collisions += 1
        return
    state.x = nx
    state.y = ny
    state.theta = ntheta
    state.v = v
    state.w = w


def sense_and_map(world: World, state: RobotPhysState, known: OccupancyGrid) -> int:
    """360-degree raycast against ground truth, integrated monotonically
    into the robot's known grid. Returns newly known cell count."""
    return kernels.integrate_scan(
        world.grid.cells,
        known.cells,
        state.x,
        state.y,
        known.origin[0],
        known.origin[1],
        known.resolution,
        N_RAYS,
        SENSE_RANGE,
    )


def detect_features(world: World, state: RobotPhysState, seen: set) -> list[Feature]:
    """Annotated features in sensing range with line of sight, each reported
    once per run per robot."""
    found = []
    for f in world.features:
        key = (f.kind, f.x, f.y)
        if key in seen:
            continue
        if math.hypot(f.x - state.x, f.y - state.y) > SENSE_RANGE:
            continue
        if not kernels.line_of_sight(
            world.grid.cells,
            state.x,
            state.y,
            f.x,
            f.y,
            world.grid.origin[0],
            world.grid.origin[1],
            world.grid.resolution,
        ):
            continue
        seen.add(key)
        found.append(f)
    return found


@dataclass
class NodeHealth:
    name: str
    status: str = "ok"  # ok | degraded (restarting) | dead
    last_heartbeat: int = 0
    restart_count: int = 0
    dead_since: int | None = None
    up_at: int | None = None  # end of restart downtime


class HealthMonitor:
    """Scripted node faults, manual/auto restarts, and the coupling of node
    status into guard inputs (slam readiness)."""

    def __init__(self, nodes=DEFAULT_NODES, auto_restart: bool = False):
        self.nodes = {n: NodeHealth(n) for n in nodes}
        self.auto_restart = auto_restart
        self._slam_ready_at = SLAM_BOOT_MS  # initial boot delay
        self._pending: list[NodeHealth] = []  # changes made outside tick()

    def kill(self, node: str, now_ms: int) -> None:
        if node not in self.nodes:
            raise UnknownNode(node)
        nh = self.nodes[node]
        nh.status = "dead"
        nh.dead_since = now_ms
        nh.up_at = None
        self._pending.append(nh)
        if node == "slam":
            self._slam_ready_at = None

    def request_restart(self, node: str, now_ms: int) -> bool:
        """Manual restart; returns True when a restart actually started."""
        if node not in self.nodes:
            raise UnknownNode(node)
        nh = self.nodes[node]
        if nh.status != "dead":
            return False
        nh.status = "degraded"
        nh.up_at = now_ms + RESTART_DOWNTIME_MS
        self._pending.append(nh)
        return True

    def tick(self, now_ms: int) -> list[NodeHealth]:
        """Advance restarts and the auto-restart policy; returns the nodes
        whose status changed since the last tick (for HEALTH reports)."""
        changed: dict[str, NodeHealth] = {nh.name: nh for nh in self._pending}
        self._pending = []
        for nh in self.nodes.values():
            if nh.status == "dead":
                if self.auto_restart and now_ms - nh.dead_since >= AUTO_RESTART_AFTER_MS:
                    nh.status = "degraded"
                    nh.up_at = now_ms + RESTART_DOWNTIME_MS
                    changed[nh.name] = nh
            elif nh.status == "degraded":
                if nh.up_at is not None and now_ms >= nh.up_at:
                    nh.status = "ok"
                    nh.restart_count += 1
                    nh.up_at = None
                    nh.dead_since = None
                    changed[nh.name] = nh
                    if nh.name == "slam":
                        self._slam_ready_at = now_ms + SLAM_BOOT_MS
            if nh.status == "ok":
                nh.last_heartbeat = now_ms
        return list(changed.values())

    def slam_initialized(self, now_ms: int) -> bool:
        slam = self.nodes.get("slam")
        if slam is None or slam.status != "ok":
            return False
        return self._slam_ready_at is not None and now_ms >= self._slam_ready_at
