"""Grid transport: split an occupancy grid into MAP_CHUNK bodies and rebuild.

Cells travel base64-encoded (1 byte per cell) so the envelope stays pure
text. Chunks are row-aligned whenever a row fits the payload budget and
fall back to flat cell ranges otherwise, so any grid is chunkable. Chunk
sizing guarantees the fully framed MAP_CHUNK message stays within the
caller's payload budget even with worst-case seq/ts digits.
"""

from __future__ import annotations

import base64
import math

import numpy as np

from fleetmux.errors import IncompleteGrid
from fleetmux.grid import OccupancyGrid
from fleetmux.protocol.messages import WireMessage, encode_message

MIN_CHUNK_PAYLOAD = 1024

# probe values sized for the largest realistic counters (16-digit seq/ts)
_PROBE_INT = 10**15


def _envelope_overhead(robot: str, grid: OccupancyGrid) -> int:
    probe = WireMessage(
        type="MAP_CHUNK",
        seq=_PROBE_INT,
        src=robot,
        ts=_PROBE_INT,
        body={
            "robot": robot,
            "index": 99_999,
            "count": 99_999,
            "row_start": 999_999,
            "row_end": 999_999,
            "width": grid.width,
            "height": grid.height,
            "resolution": grid.resolution,
            "origin": [grid.origin[0], grid.origin[1]],
            "offset": 10**9,
            "cells": "",
        },
    )
    return len(encode_message(probe))


def chunk_grid(grid: OccupancyGrid, max_payload: int, robot: str) -> list[dict]:
    """Split a grid into MAP_CHUNK bodies, ordered by chunk index."""
    if max_payload < MIN_CHUNK_PAYLOAD:
        raise ValueError(f"max_payload must be >= {MIN_CHUNK_PAYLOAD}")
    usable_b64 = max_payload - _envelope_overhead(robot, grid)
    raw_per_chunk = max(1, (usable_b64 // 4) * 3)
    flat = grid.cells.reshape(-1)
    total = flat.size

    if raw_per_chunk >= grid.width:
        rows_per_chunk = raw_per_chunk // grid.width
        step = rows_per_chunk * grid.width
    else:
        step = raw_per_chunk  # a single row is too wide; split it
    count = max(1, math.ceil(total / step))

    bodies = []
    for i in range(count):
        lo = i * step
        hi = min(total, lo + step)
        cells_b64 = base64.b64encode(flat[lo:hi].tobytes()).decode("ascii")
        bodies.append(
            {
                "robot": robot,
                "index": i,
                "count": count,
                "row_start": lo // grid.width,
                "row_end": (hi - 1) // grid.width + 1,
                "width": grid.width,
                "height": grid.height,
                "resolution": grid.resolution,
                "origin": [grid.origin[0], grid.origin[1]],
                "offset": lo,
                "cells": cells_b64,
            }
        )
    return bodies


def grid_from_chunks(bodies: list[dict]) -> OccupancyGrid:
    """Rebuild a grid from MAP_CHUNK bodies, in any order.

    Raises IncompleteGrid when chunks are missing or inconsistent; never
    returns a wrong grid."""
    if not bodies:
        raise IncompleteGrid("no chunks")
    by_index = {}
    for b in bodies:
        by_index.setdefault(b["index"], b)
    first = by_index[min(by_index)]
    count = first["count"]
    meta = (first["width"], first["height"], first["resolution"], tuple(first["origin"]))
    for b in by_index.values():
        if (b["width"], b["height"], b["resolution"], tuple(b["origin"])) != meta or b[
            "count"
        ] != count:
            raise IncompleteGrid("chunk metadata mismatch")
    missing = [i for i in range(count) if i not in by_index]
    if missing:
        raise IncompleteGrid(f"missing chunk indices {missing}")

    width, height, resolution, origin = meta
    total = width * height
    flat = np.empty(total, dtype=np.uint8)
    filled = 0
    for i in range(count):
        b = by_index[i]
        raw = np.frombuffer(base64.b64decode(b["cells"]), dtype=np.uint8)
        lo = b["offset"]
        if lo != filled:
            raise IncompleteGrid(f"chunk {i} offset {lo} != expected {filled}")
        if lo + raw.size > total:
            raise IncompleteGrid(f"chunk {i} overruns the grid")
        flat[lo : lo + raw.size] = raw
        filled = lo + raw.size
    if filled != total:
        raise IncompleteGrid(f"cells cover {filled} of {total}")
    return OccupancyGrid(resolution, origin, width, height, flat.reshape(height, width))


# Backwards-friendly alias used by the basestation's per-robot buffers.
reassemble_grid = grid_from_chunks
