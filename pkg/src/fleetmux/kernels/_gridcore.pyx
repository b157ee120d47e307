# cython: language_level=3
"""Compiled grid kernels; the hot inner loops of the simulator.

Bit-identical twin of ``pure.py``: same sample spacing, same order of float
operations, same floor-to-cell mapping. Any change here must be mirrored
there (test_kernels checks parity on randomized inputs).
"""

from libc.math cimport ceil, cos, floor, sin, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double PI = 3.141592653589793

cdef cnp.uint8_t UNKNOWN = 0
cdef cnp.uint8_t FREE = 1
cdef cnp.uint8_t OCCUPIED = 2


cdef double FAR = 1e30  # sentinel for axis-parallel rays


def integrate_scan(cnp.uint8_t[:, :] truth, cnp.uint8_t[:, :] known,
                   double px, double py, double ox, double oy, double res,
                   int n_rays, double max_range):
    """March n_rays from (px, py) over the truth grid, updating known in
    place with the monotone rule (unknown->free/occupied; occupied sticks).
    Exact grid traversal: every cell a ray crosses is visited, so the map
    has no corner-clip pinholes. Returns the number of newly known cells."""
    cdef int h = truth.shape[0]
    cdef int w = truth.shape[1]
    cdef int count = 0
    cdef int r, row, col, step_row, step_col
    cdef double ang, dx, dy, t, t_max_x, t_max_y, t_delta_x, t_delta_y
    cdef cnp.uint8_t v

    cdef int row0 = <int>floor((py - oy) / res)
    cdef int col0 = <int>floor((px - ox) / res)
    if 0 <= row0 < h and 0 <= col0 < w and known[row0, col0] == UNKNOWN:
        known[row0, col0] = FREE
        count += 1

    for r in range(n_rays):
        ang = (2.0 * PI * r) / n_rays
        dx = cos(ang)
        dy = sin(ang)
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
            t_max_x = FAR
            t_delta_x = FAR
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
            t_max_y = FAR
            t_delta_y = FAR
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


def inflate(cnp.uint8_t[:, :] cells, double radius_cells):
    """Dilate occupied cells by a Euclidean radius (in cell units) and turn
    unknown cells occupied; result is a planning grid of FREE/OCCUPIED."""
    cdef int h = cells.shape[0]
    cdef int w = cells.shape[1]
    cdef int r_int = <int>floor(radius_cells)
    cdef double r2 = radius_cells * radius_cells
    out_arr = np.empty((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] out = out_arr
    cdef int row, col, dy, dx, nr, nc

    for row in range(h):
        for col in range(w):
            out[row, col] = OCCUPIED if cells[row, col] != FREE else FREE
    for row in range(h):
        for col in range(w):
            if cells[row, col] != OCCUPIED:
                continue
            for dy in range(-r_int, r_int + 1):
                for dx in range(-r_int, r_int + 1):
                    if dx * dx + dy * dy > r2:
                        continue
                    nr = row + dy
                    nc = col + dx
                    if 0 <= nr < h and 0 <= nc < w:
                        out[nr, nc] = OCCUPIED
    return out_arr


def points_all_free(cnp.uint8_t[:, :] cells, xs, ys,
                    double ox, double oy, double res):
    """True iff every world point maps to an in-bounds FREE cell."""
    cdef int h = cells.shape[0]
    cdef int w = cells.shape[1]
    cdef cnp.float64_t[:] xv = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.float64_t[:] yv = np.ascontiguousarray(ys, dtype=np.float64)
    cdef int n = xv.shape[0]
    cdef int i, row, col
    for i in range(n):
        col = <int>floor((xv[i] - ox) / res)
        row = <int>floor((yv[i] - oy) / res)
        if row < 0 or row >= h or col < 0 or col >= w:
            return False
        if cells[row, col] != FREE:
            return False
    return True


def frontier_mask(cnp.uint8_t[:, :] cells):
    """Mask of frontier cells: FREE and 8-adjacent to at least one UNKNOWN."""
    cdef int h = cells.shape[0]
    cdef int w = cells.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] out = out_arr
    cdef int row, col, dy, dx, nr, nc

    for row in range(h):
        for col in range(w):
            if cells[row, col] != FREE:
                continue
            for dy in range(-1, 2):
                for dx in range(-1, 2):
                    if dx == 0 and dy == 0:
                        continue
                    nr = row + dy
                    nc = col + dx
                    if 0 <= nr < h and 0 <= nc < w and cells[nr, nc] == UNKNOWN:
                        out[row, col] = 1
                        break
                if out[row, col]:
                    break
    return out_arr


def reachable_mask(cnp.uint8_t[:, :] cells, int start_row, int start_col):
    """Mask of FREE cells 4-connected to the start cell (inclusive)."""
    cdef int h = cells.shape[0]
    cdef int w = cells.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, :] out = out_arr
    if not (0 <= start_row < h and 0 <= start_col < w):
        return out_arr
    if cells[start_row, start_col] != FREE:
        return out_arr

    queue_arr = np.empty(h * w, dtype=np.int64)
    cdef cnp.int64_t[:] queue = queue_arr
    cdef int head = 0, tail = 0
    cdef int r, c, nr, nc, i
    cdef cnp.int64_t cur

    out[start_row, start_col] = 1
    queue[tail] = start_row * w + start_col
    tail += 1
    while head < tail:
        cur = queue[head]
        head += 1
        r = <int>(cur // w)
        c = <int>(cur % w)
        for i in range(4):
            if i == 0:
                nr = r - 1; nc = c
            elif i == 1:
                nr = r + 1; nc = c
            elif i == 2:
                nr = r; nc = c - 1
            else:
                nr = r; nc = c + 1
            if 0 <= nr < h and 0 <= nc < w and not out[nr, nc] and cells[nr, nc] == FREE:
                out[nr, nc] = 1
                queue[tail] = nr * w + nc
                tail += 1
    return out_arr


def line_of_sight(cnp.uint8_t[:, :] truth, double x0, double y0,
                  double x1, double y1, double ox, double oy, double res):
    """True iff no occupied cell lies strictly between the two world points
    (the target's own cell is not counted as blocking)."""
    cdef int h = truth.shape[0]
    cdef int w = truth.shape[1]
    cdef double dx = x1 - x0
    cdef double dy = y1 - y0
    cdef double dist = sqrt(dx * dx + dy * dy)
    if dist == 0.0:
        return True
    cdef double step = 0.5 * res
    cdef int n = <int>ceil(dist / step)
    cdef double ux = dx / dist
    cdef double uy = dy / dist
    cdef int tr = <int>floor((y1 - oy) / res)
    cdef int tc = <int>floor((x1 - ox) / res)
    cdef int k, row, col
    cdef double t, x, y
    for k in range(1, n):
        t = k * step
        if t >= dist:
            break
        x = x0 + ux * t
        y = y0 + uy * t
        col = <int>floor((x - ox) / res)
        row = <int>floor((y - oy) / res)
        if not (0 <= row < h and 0 <= col < w):
            return False
        if row == tr and col == tc:
            continue
        if truth[row, col] == OCCUPIED:
            return False
    return True
