"""Per-mode directive generators feeding the mux: smart-joystick shaping,
waypoint seeking, frontier exploration, and get-out-of-the-way."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from fleetmux import kernels
from fleetmux.grid import FREE, OccupancyGrid

V_MAX = 1.0  # m/s
W_MAX = 1.5  # rad/s

GOAL_TOLERANCE = 0.3  # m
JOYSTICK_STALE_MS = 500
SMART_TURN_MAX = math.pi / 2  # full stick deflection = 90 deg heading offset

FRONTIER_MIN_CLUSTER = 5  # cells
EXPLORE_GOAL_TIMEOUT_MS = 30_000
EXPLORE_BLACKLIST_RADIUS_CELLS = 5

GETOUT_TRIGGER_M = 0.8  # path closer than this to an idle robot trips it
GETOUT_RESOLVE_M = 1.2  # a safe spot keeps at least this much clearance


# --- navigation directives (the mux's only currency) ---

@dataclass(frozen=True)
class DirectTwist:
    v: float
    w: float

    def __post_init__(self):
        if abs(self.v) > V_MAX + 1e-9 or abs(self.w) > W_MAX + 1e-9:
            raise ValueError(f"twist out of bounds: {self.v}, {self.w}")


@dataclass(frozen=True)
class HeadingIntent:
    theta: float  # desired world-frame heading, rad
    speed_frac: float  # [0, 1]

    def __post_init__(self):
        if not 0.0 <= self.speed_frac <= 1.0:
            raise ValueError(f"speed_frac out of range: {self.speed_frac}")


@dataclass(frozen=True)
class GoalPoint:
    x: float
    y: float
    tolerance: float = GOAL_TOLERANCE

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass(frozen=True)
class Stop:
    pass


STOP = Stop()

# sentinels the generators return instead of a directive
REACHED = "reached"
DONE = "done"
HOLD = "hold"  # already clear of the intruding path
STUCK = "stuck"  # no qualifying cell exists; operator must intervene


def clamp_twist(v: float, w: float) -> DirectTwist:
    return DirectTwist(max(-V_MAX, min(V_MAX, v)), max(-W_MAX, min(W_MAX, w)))


def smart_joystick_directive(fwd: float, turn: float, heading: float) -> HeadingIntent:
    """Map a joystick sample to a heading intent the local planner resolves.
    Full turn deflection offsets the heading by 90 degrees; no reverse."""
    fwd = max(-1.0, min(1.0, fwd))
    turn = max(-1.0, min(1.0, turn))
    return HeadingIntent(heading + turn * SMART_TURN_MAX, max(0.0, fwd))


def waypoint_directive(goal: GoalPoint, pose_xy: tuple[float, float]):
    """Re-emit the goal until the planar distance drops inside tolerance."""
    if math.dist(pose_xy, (goal.x, goal.y)) <= goal.tolerance:
        return REACHED
    return goal


# --- frontier exploration ---

@dataclass(frozen=True)
class FrontierCluster:
    cells: tuple  # ((row, col), ...) sorted by row-major index
    centroid: tuple[float, float]  # world coords

    @property
    def size(self) -> int:
        return len(self.cells)


def find_frontiers(grid: OccupancyGrid, min_cluster: int = FRONTIER_MIN_CLUSTER):
    """All maximal 8-connected clusters of frontier cells (free cells
    touching unknown), at least min_cluster big, ordered by min cell index."""
    mask = kernels.frontier_mask(grid.cells)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    clusters = []
    rows, cols = np.nonzero(mask)
    order = np.argsort(rows * w + cols, kind="stable")
    for idx in order:
        r0, c0 = int(rows[idx]), int(cols[idx])
        if seen[r0, c0]:
            continue
        stack = [(r0, c0)]
        seen[r0, c0] = 1
        cells = []
        while stack:
            r, c = stack.pop()
            cells.append((r, c))
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                        seen[nr, nc] = 1
                        stack.append((nr, nc))
        if len(cells) < min_cluster:
            continue
        cells.sort(key=lambda rc: rc[0] * w + rc[1])
        xs = [grid.cell_to_world(r, c)[0] for r, c in cells]
        ys = [grid.cell_to_world(r, c)[1] for r, c in cells]
        centroid = (sum(xs) / len(xs), sum(ys) / len(ys))
        clusters.append(FrontierCluster(tuple(cells), centroid))
    clusters.sort(key=lambda cl: cl.cells[0][0] * w + cl.cells[0][1])
    return clusters


@dataclass
class ExploreState:
    goal: GoalPoint | None = None
    goal_cell: tuple[int, int] | None = None
    goal_set_at_ms: int = 0
    blacklist: set = field(default_factory=set)
    done: bool = False

    def reset(self):
        self.goal = None
        self.goal_cell = None
        self.done = False
        self.blacklist.clear()


def _cluster_target(grid: OccupancyGrid, cluster: FrontierCluster, reach) -> tuple | None:
    """Target cell for a cluster: its centroid cell when that is reachable
    free space, else the cluster cell nearest the centroid. None when
    nothing in the cluster is reachable."""
    r, c = grid.world_to_cell(*cluster.centroid)
    if grid.in_bounds(r, c) and grid.cells[r, c] == FREE and reach[r, c]:
        return (r, c)
    best = None
    best_d = None
    for cr, cc in cluster.cells:
        if not reach[cr, cc]:
            continue
        x, y = grid.cell_to_world(cr, cc)
        d = (x - cluster.centroid[0]) ** 2 + (y - cluster.centroid[1]) ** 2
        if best_d is None or (d, cr, cc) < (best_d, best[0], best[1]):
            best, best_d = (cr, cc), d
    return best


def _blacklisted(state: ExploreState, cell: tuple[int, int]) -> bool:
    r, c = cell
    rad = EXPLORE_BLACKLIST_RADIUS_CELLS
    return any(abs(r - br) <= rad and abs(c - bc) <= rad for br, bc in state.blacklist)


def exploration_step(
    grid: OccupancyGrid,
    pose_xy: tuple[float, float],
    state: ExploreState,
    now_ms: int,
):
    """Nearest-reachable-frontier goal selection with per-run blacklist.
    Returns a GoalPoint, or DONE when no eligible cluster remains."""
    if state.done:
        return DONE

    # keep chasing the current goal while it is timely and still a frontier
    if state.goal is not None:
        if math.dist(pose_xy, (state.goal.x, state.goal.y)) <= state.goal.tolerance:
            state.goal = None
        elif now_ms - state.goal_set_at_ms > EXPLORE_GOAL_TIMEOUT_MS:
            state.blacklist.add(state.goal_cell)
            state.goal = None

    clusters = find_frontiers(grid)
    if state.goal is not None:
        gr, gc = state.goal_cell
        near = any(
            abs(gr - r) <= 3 and abs(gc - c) <= 3 for cl in clusters for r, c in cl.cells
        )
        if near:
            return state.goal
        state.goal = None

    if not clusters:
        state.done = True
        return DONE
    sr, sc = grid.world_to_cell(*pose_xy)
    reach = kernels.reachable_mask(grid.cells, sr, sc)
    best = None
    for cl in clusters:
        target = _cluster_target(grid, cl, reach)
        if target is None or _blacklisted(state, target):
            continue
        d = math.dist(pose_xy, cl.centroid)
        if best is None or d < best[0]:
            best = (d, target, cl)
    if best is None:
        state.done = True
        return DONE
    _, (tr, tc), _ = best
    x, y = grid.cell_to_world(tr, tc)
    state.goal = GoalPoint(x, y, GOAL_TOLERANCE)
    state.goal_cell = (tr, tc)
    state.goal_set_at_ms = now_ms
    return state.goal


# --- get-out-of-the-way ---

def path_conflicts(path, pose_xy: tuple[float, float], clearance: float = GETOUT_TRIGGER_M) -> bool:
    """True when any point of another robot's planned path comes within
    the trigger clearance of this robot."""
    px, py = pose_xy
    return any((x - px) ** 2 + (y - py) ** 2 < clearance * clearance for x, y in path)


def getout_step(
    path,
    inflated: OccupancyGrid,
    pose_xy: tuple[float, float],
    resolve_m: float = GETOUT_RESOLVE_M,
    search_radius_m: float = 5.0,
):
    """Nearest free, non-inflated cell at least resolve_m from every point
    of the intruding path. HOLD when already clear; STUCK when no cell
    qualifies (the caller notifies the operator)."""
    px, py = pose_xy
    pts = np.asarray(path, dtype=np.float64)
    if pts.size == 0:
        return HOLD
    d2_pose = ((pts[:, 0] - px) ** 2 + (pts[:, 1] - py) ** 2).min()
    if d2_pose >= resolve_m * resolve_m:
        return HOLD

    res = inflated.resolution
    r0, c0 = inflated.world_to_cell(px, py)
    rad = int(math.ceil(search_radius_m / res))
    r_lo, r_hi = max(0, r0 - rad), min(inflated.height, r0 + rad + 1)
    c_lo, c_hi = max(0, c0 - rad), min(inflated.width, c0 + rad + 1)
    sub = inflated.cells[r_lo:r_hi, c_lo:c_hi]
    free_r, free_c = np.nonzero(sub == FREE)
    if free_r.size == 0:
        return STUCK
    free_r = free_r + r_lo
    free_c = free_c + c_lo
    cx = inflated.origin[0] + (free_c + 0.5) * res
    cy = inflated.origin[1] + (free_r + 0.5) * res
    d2_path = np.full(free_r.shape, np.inf)
    for x, y in pts:
        d2_path = np.minimum(d2_path, (cx - x) ** 2 + (cy - y) ** 2)
    ok = d2_path >= resolve_m * resolve_m
    if not ok.any():
        return STUCK
    d2_self = (cx - px) ** 2 + (cy - py) ** 2
    cand = np.nonzero(ok)[0]
    order = np.lexsort((free_c[cand], free_r[cand], d2_self[cand]))
    pick = cand[order[0]]
    x, y = inflated.cell_to_world(int(free_r[pick]), int(free_c[pick]))
    return GoalPoint(x, y, GOAL_TOLERANCE)
