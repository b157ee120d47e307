"""Pure-Python grid kernels; fallback twin of the compiled extension.

Every function here must produce bit-identical output to its counterpart in
``_gridcore.pyx``: same sample spacing, same order of float operations, same
floor-to-cell mapping. Keep the two files in lockstep (test_kernels checks
parity on randomized inputs).
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

UNKNOWN = 0
FREE = 1
OCCUPIED = 2


_FAR = 1e30  # sentinel for axis-parallel rays


def integrate_scan(truth, known, px, py, ox, oy, res, n_rays, max_range):
    """March n_rays from (px, py) over the truth grid, updating known in
    place with the monotone rule (unknown->free/occupied; occupied sticks).
    Exact grid traversal: every cell a ray crosses is visited, so the map
    has no corner-clip pinholes. Returns the number of newly known cells."""
    h, w = truth.shape
    count = 0

    row0 = int(math.floor((py - oy) / res))
    col0 = int(math.floor((px - ox) / res))
    if 0 <= row0 < h and 0 <= col0 < w and known[row0, col0] == UNKNOWN:
        known[row0, col0] = FREE
        count += 1

    for r in range(n_rays):
        ang = (2.0 * math.pi * r) / n_rays
        dx = math.cos(ang)
        dy = math.sin(ang)
        col = col0
        row = row0
        if dx > 0.0:
            step_col = 1
            t_max_x = (ox + (col + 1) * res - px) / dx
            t_delta_x = res / dx
        elif dx < 0.0:
            step_col = -1
            t_max_x = (ox + col * res - px) / dx
            t_delta_x = -res / dx
        else:
            step_col = 0
            t_max_x = _FAR
            t_delta_x = _FAR
        if dy > 0.0:
            step_row = 1
            t_max_y = (oy + (row + 1) * res - py) / dy
            t_delta_y = res / dy
        elif dy < 0.0:
            step_row = -1
            t_max_y = (oy + row * res - py) / dy
            t_delta_y = -res / dy
        else:
            step_row = 0
            t_max_y = _FAR
            t_delta_y = _FAR
        while True:
            if t_max_x < t_max_y:
                t = t_max_x
                t_max_x += t_delta_x
                col += step_col
            else:
                t = t_max_y
                t_max_y += t_delta_y
                row += step_row
            if t > max_range:
                break
            if row < 0 or row >= h or col < 0 or col >= w:
                break
            v = truth[row, col]
            if v == OCCUPIED:
                if known[row, col] == UNKNOWN:
                    count += 1
                known[row, col] = OCCUPIED
                break
            if known[row, col] == UNKNOWN:
                known[row, col] = FREE
                count += 1
    return count


def inflate(cells, radius_cells):
    """Dilate occupied cells by a Euclidean radius (in cell units) and turn
    unknown cells occupied; result is a planning grid of FREE/OCCUPIED."""
    h, w = cells.shape
    occ = cells == OCCUPIED
    grown = occ.copy()
    r_int = int(math.floor(radius_cells))
    r2 = radius_cells * radius_cells
    for dy in range(-r_int, r_int + 1):
        for dx in range(-r_int, r_int + 1):
            if dx == 0 and dy == 0:
                continue
            if dx * dx + dy * dy > r2:
                continue
            src = occ[
                max(0, -dy) : h - max(0, dy),
                max(0, -dx) : w - max(0, dx),
            ]
            grown[
                max(0, dy) : h - max(0, -dy),
                max(0, dx) : w - max(0, -dx),
            ] |= src
    out = np.where(grown | (cells == UNKNOWN), OCCUPIED, FREE).astype(np.uint8)
    return out


def points_all_free(cells, xs, ys, ox, oy, res):
    """True iff every world point maps to an in-bounds FREE cell."""
    h, w = cells.shape
    cols = np.floor((np.asarray(xs) - ox) / res).astype(np.int64)
    rows = np.floor((np.asarray(ys) - oy) / res).astype(np.int64)
    inb = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)
    if not inb.all():
        return False
    return bool((cells[rows, cols] == FREE).all())


def frontier_mask(cells):
    """Mask of frontier cells: FREE and 8-adjacent to at least one UNKNOWN."""
    h, w = cells.shape
    unk = cells == UNKNOWN
    near_unk = np.zeros((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            near_unk[
                max(0, dy) : h - max(0, -dy),
                max(0, dx) : w - max(0, -dx),
            ] |= unk[
                max(0, -dy) : h - max(0, dy),
                max(0, -dx) : w - max(0, dx),
            ]
    return ((cells == FREE) & near_unk).astype(np.uint8)


def reachable_mask(cells, start_row, start_col):
    """Mask of FREE cells 4-connected to the start cell (inclusive)."""
    h, w = cells.shape
    out = np.zeros((h, w), dtype=np.uint8)
    if not (0 <= start_row < h and 0 <= start_col < w):
        return out
    if cells[start_row, start_col] != FREE:
        return out
    out[start_row, start_col] = 1
    q = deque([(start_row, start_col)])
    while q:
        r, c = q.popleft()
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < h and 0 <= nc < w and not out[nr, nc] and cells[nr, nc] == FREE:
                out[nr, nc] = 1
                q.append((nr, nc))
    return out


def line_of_sight(truth, x0, y0, x1, y1, ox, oy, res):
    """True iff no occupied cell lies strictly between the two world points
    (the target's own cell is not counted as blocking)."""
    h, w = truth.shape
    dx = x1 - x0
    dy = y1 - y0
    dist = math.sqrt(dx * dx + dy * dy)
    if dist == 0.0:
        return True
    step = 0.5 * res
    n = int(math.ceil(dist / step))
    ux = dx / dist
    uy = dy / dist
    tr = int(math.floor((y1 - oy) / res))
    tc = int(math.floor((x1 - ox) / res))
    for k in range(1, n):
        t = k * step
        if t >= dist:
            break
        x = x0 + ux * t
        y = y0 + uy * t
        col = int(math.floor((x - ox) / res))
        row = int(math.floor((y - oy) / res))
        if not (0 <= row < h and 0 <= col < w):
            return False
        if row == tr and col == tc:
            continue
        if truth[row, col] == OCCUPIED:
            return False
    return True
