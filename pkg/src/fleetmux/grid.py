"""2D occupancy grid shared by mapping, planning, exploration and telemetry.

Cell codes are fixed by the wire protocol: 0 = unknown, 1 = free,
2 = occupied. Cells are stored row-major as a (height, width) uint8 array;
cell (row, col) covers world x in [origin_x + col*res, origin_x + (col+1)*res).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

DEFAULT_RESOLUTION = 0.1  # m/cell


@dataclass
class OccupancyGrid:
    resolution: float
    origin: tuple[float, float]
    width: int
    height: int
    cells: np.ndarray = field(default=None)  # uint8 (height, width)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        if self.cells is None:
            self.cells = np.zeros((self.height, self.width), dtype=np.uint8)
        else:
            self.cells = np.asarray(self.cells, dtype=np.uint8)
            if self.cells.shape != (self.height, self.width):
                raise ValueError("cells shape does not match width/height")

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.origin == other.origin
            and self.width == other.width
            and self.height == other.height
            and np.array_equal(self.cells, other.cells)
        )

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(
            self.resolution, self.origin, self.width, self.height, self.cells.copy()
        )

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """World point -> (row, col). May be out of bounds; caller checks."""
        col = int(math.floor((x - self.origin[0]) / self.resolution))
        row = int(math.floor((y - self.origin[1]) / self.resolution))
        return row, col

    def cell_to_world(self, row: int, col: int) -> tuple[float, float]:
        """Center of cell (row, col) in world coordinates."""
        x = self.origin[0] + (col + 0.5) * self.resolution
        y = self.origin[1] + (row + 0.5) * self.resolution
        return x, y

    def at_world(self, x: float, y: float) -> int:
        """Cell value at a world point; out of bounds reads as OCCUPIED."""
        row, col = self.world_to_cell(x, y)
        if not self.in_bounds(row, col):
            return OCCUPIED
        return int(self.cells[row, col])

    def known_count(self) -> int:
        return int(np.count_nonzero(self.cells != UNKNOWN))

    def downsample(self, factor: int) -> "OccupancyGrid":
        """Block-reduce for telemetry: occupied if any occupied, else unknown
        if any unknown, else free. Conservative for operator display."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        out_h = -(-self.height // factor)
        out_w = -(-self.width // factor)
        padded = np.full((out_h * factor, out_w * factor), FREE, dtype=np.uint8)
        padded[: self.height, : self.width] = self.cells
        blocks = padded.reshape(out_h, factor, out_w, factor)
        any_occ = (blocks == OCCUPIED).any(axis=(1, 3))
        any_unk = (blocks == UNKNOWN).any(axis=(1, 3))
        out = np.where(any_occ, OCCUPIED, np.where(any_unk, UNKNOWN, FREE))
        return OccupancyGrid(
            self.resolution * factor,
            self.origin,
            out_w,
            out_h,
            out.astype(np.uint8),
        )
