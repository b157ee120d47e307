"""Navigation layer: constant-curvature trajectory library, obstacle-aware
arc selection over the inflated grid, and the tracking controller.

Reachable only through the mux: the robot agent forwards exactly one
directive per tick and tags it with its source for the audit log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from fleetmux import kernels
from fleetmux.errors import BadParams
from fleetmux.grid import OccupancyGrid
from fleetmux.modes import STOP, DirectTwist, GoalPoint, HeadingIntent, Stop, V_MAX, clamp_twist

ROBOT_RADIUS = 0.4  # m, also the default inflation radius
CURVATURE_COST_WEIGHT = 0.2
GOAL_SLOWDOWN_DIST = 1.0  # m


@dataclass(frozen=True)
class TrajectoryParams:
    kappa_max: float = 1.0  # 1/m
    n_arcs: int = 11
    arc_length: float = 3.0  # m
    sample_step: float = 0.1  # m


@dataclass(frozen=True)
class Trajectory:
    kappa: float
    xs: np.ndarray  # robot-frame sample points, arc length k*sample_step
    ys: np.ndarray

    @property
    def endpoint(self) -> tuple[float, float]:
        return float(self.xs[-1]), float(self.ys[-1])


@dataclass(frozen=True)
class TrajectoryLibrary:
    params: TrajectoryParams
    arcs: tuple


def build_trajectory_library(params: TrajectoryParams = TrajectoryParams()) -> TrajectoryLibrary:
    """Arc points from the closed form x(s) = sin(ks)/k, y(s) = (1-cos(ks))/k
    (straight line for k = 0); n_arcs evenly spaced curvatures, k=0 included."""
    if params.n_arcs < 1 or params.n_arcs % 2 == 0:
        raise BadParams("n_arcs must be odd and positive")
    if params.kappa_max <= 0 or params.arc_length <= 0 or params.sample_step <= 0:
        raise BadParams("kappa_max, arc_length, sample_step must be positive")
    if params.sample_step > params.arc_length:
        raise BadParams("sample_step exceeds arc_length")
    n_samples = int(round(params.arc_length / params.sample_step)) + 1
    arcs = []
    for i in range(params.n_arcs):
        if params.n_arcs == 1:
            kappa = 0.0
        else:
            kappa = -params.kappa_max + i * (2.0 * params.kappa_max / (params.n_arcs - 1))
        ss = np.arange(n_samples, dtype=np.float64) * params.sample_step
        if kappa == 0.0:
            xs = ss.copy()
            ys = np.zeros_like(ss)
        else:
            xs = np.sin(kappa * ss) / kappa
            ys = (1.0 - np.cos(kappa * ss)) / kappa
        arcs.append(Trajectory(kappa, xs, ys))
    return TrajectoryLibrary(params, tuple(arcs))


def inflate_grid(grid: OccupancyGrid, radius: float = ROBOT_RADIUS) -> OccupancyGrid:
    """Planning grid: occupied cells dilated by the robot radius and unknown
    treated as occupied."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    cells = kernels.inflate(grid.cells, radius / grid.resolution)
    return OccupancyGrid(grid.resolution, grid.origin, grid.width, grid.height, cells)


def _wrap_angle(a: float) -> float:
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def score_and_select(
    lib: TrajectoryLibrary,
    inflated: OccupancyGrid,
    directive,
    pose: tuple[float, float, float],
):
    """Pick the feasible arc minimizing the directive's cost; Stop when
    nothing clears the grid. The robot's own footprint cell (s=0) is not
    counted against an arc since every arc shares it.

    Goals beyond the library horizon score the arc endpoint. Once the goal
    is inside the horizon the closest arc sample scores instead: only a
    slice of the arc executes before the next replan, and endpoint-only
    cost limit-cycles around near goals instead of terminating."""
    px, py, theta = pose
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    goal_near = isinstance(directive, GoalPoint) and (
        math.hypot(directive.x - px, directive.y - py) <= lib.params.arc_length
    )
    best = None
    for traj in lib.arcs:
        wx = px + cos_t * traj.xs - sin_t * traj.ys
        wy = py + sin_t * traj.xs + cos_t * traj.ys
        if not kernels.points_all_free(
            inflated.cells,
            wx[1:],
            wy[1:],
            inflated.origin[0],
            inflated.origin[1],
            inflated.resolution,
        ):
            continue
        if isinstance(directive, GoalPoint):
            if goal_near:
                d2 = (wx - directive.x) ** 2 + (wy - directive.y) ** 2
                cost = math.sqrt(float(d2.min()))
            else:
                cost = math.hypot(wx[-1] - directive.x, wy[-1] - directive.y)
        elif isinstance(directive, HeadingIntent):
            end_heading = theta + traj.kappa * lib.params.arc_length
            cost = abs(_wrap_angle(end_heading - directive.theta))
        else:
            raise TypeError(f"cannot score directive {directive!r}")
        cost += CURVATURE_COST_WEIGHT * abs(traj.kappa)
        key = (cost, abs(traj.kappa), 0 if traj.kappa >= 0 else 1)
        if best is None or key < best[0]:
            best = (key, traj)
    if best is None:
        return STOP
    return best[1]


def track(selected, directive, pose: tuple[float, float, float]) -> DirectTwist:
    """Constant-curvature tracking of the selected arc: v from the directive
    (speed fraction, or linear slowdown near a goal), w = kappa * v."""
    if isinstance(selected, Stop) or selected is None:
        return DirectTwist(0.0, 0.0)
    if isinstance(directive, HeadingIntent):
        v = V_MAX * directive.speed_frac
    elif isinstance(directive, GoalPoint):
        dist = math.hypot(directive.x - pose[0], directive.y - pose[1])
        v = V_MAX * min(1.0, dist / GOAL_SLOWDOWN_DIST)
    else:
        raise TypeError(f"cannot track directive {directive!r}")
    return clamp_twist(v, selected.kappa * v)
