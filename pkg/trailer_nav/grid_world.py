"""
Occupancy-grid world representation, footprint rasterization and collision
queries.

Cells are half-open squares: cell (ix, iy) covers
[origin.x + ix*res, origin.x + (ix+1)*res) x [origin.y + iy*res, ...). Row 0 is
the minimum y row. A cell belongs to a footprint when its center lies inside
the footprint (closed membership).
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .models import Footprint, Pose2D

logger = logging.getLogger(__name__)

MAP_MAGIC = 'gridmap v1'
OCCUPIED_GLYPH = '#'
FREE_GLYPH = '.'

Cell = Tuple[int, int]
Point = Tuple[float, float]


class GridFormatError(Exception):
    """Custom exception for malformed map files."""
    pass


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """
    Immutable binary occupancy grid.

    cells is a boolean array of shape (height, width) indexed [iy, ix];
    True means occupied.
    """
    resolution: float
    origin: Pose2D
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValueError("Grid resolution must be a positive finite number")
        if self.origin.theta != 0.0:
            raise ValueError("Grid origin must have theta = 0")
        cells = np.array(self.cells, dtype=bool)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise ValueError("Grid cells must be a 2D array with at least one cell")
        cells.setflags(write=False)
        object.__setattr__(self, 'cells', cells)

    @classmethod
    def empty(cls, width: int, height: int, resolution: float,
              origin: Tuple[float, float] = (0.0, 0.0)) -> 'OccupancyGrid':
        return cls(resolution, Pose2D(origin[0], origin[1], 0.0),
                   np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return int(self.cells.shape[1])

    @property
    def height(self) -> int:
        return int(self.cells.shape[0])

    @property
    def size_m(self) -> Tuple[float, float]:
        return (self.width * self.resolution, self.height * self.resolution)

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_occupied(self, ix: int, iy: int) -> bool:
        return bool(self.cells[iy, ix])

    def occupied_cells(self) -> np.ndarray:
        """Occupied cells as an (N, 2) array of (ix, iy), sorted by (iy, ix)."""
        iy, ix = np.nonzero(self.cells)
        return np.column_stack([ix, iy])

    def with_occupied(self, cells: Iterable[Cell]) -> 'OccupancyGrid':
        """Copy of this grid with the given in-bounds cells marked occupied."""
        data = np.array(self.cells, dtype=bool)
        for ix, iy in cells:
            if self.in_bounds(ix, iy):
                data[iy, ix] = True
        return OccupancyGrid(self.resolution, self.origin, data)

    def fingerprint(self) -> str:
        return hashlib.sha1(save_grid(self).encode('ascii')).hexdigest()

    @cached_property
    def obstacle_index(self) -> 'ObstacleIndex':
        return ObstacleIndex(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.resolution == other.resolution and self.origin == other.origin
                and np.array_equal(self.cells, other.cells))

    __hash__ = object.__hash__


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def load_grid(text_map: str) -> OccupancyGrid:
    """
    Parse a `gridmap v1` map.

    Header numbers may be written in any form float() and int() accept, so
    `origin 0 0` and `resolution 0.050` are read like their canonical forms.

    Args:
        text_map: Map text, header plus one row of glyphs per cell row

    Returns:
        OccupancyGrid with the declared dimensions

    Raises:
        GridFormatError: If the header is malformed, the body does not match the
            declared size, or a glyph is neither '#' nor '.'
    """
    lines = text_map.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    if len(lines) < 2 or lines[0] != MAP_MAGIC:
        raise GridFormatError(f"Missing '{MAP_MAGIC}' header line")

    tokens = lines[1].split(' ')
    if (len(tokens) != 8 or tokens[0] != 'resolution' or tokens[2] != 'origin'
            or tokens[5] != 'size'):
        raise GridFormatError(f"Malformed header line: {lines[1]!r}")
    try:
        resolution = float(tokens[1])
        ox, oy = float(tokens[3]), float(tokens[4])
        width, height = int(tokens[6]), int(tokens[7])
    except ValueError as e:
        raise GridFormatError(f"Malformed header value: {e}") from e
    if not resolution > 0 or not (math.isfinite(ox) and math.isfinite(oy)):
        raise GridFormatError("Resolution must be positive and origin finite")
    if width < 1 or height < 1:
        raise GridFormatError(f"Grid size must be at least 1x1, got {width}x{height}")

    body = lines[2:]
    if len(body) != height:
        raise GridFormatError(f"Expected {height} rows, found {len(body)}")

    cells = np.zeros((height, width), dtype=bool)
    for iy, row in enumerate(body):
        if len(row) != width:
            raise GridFormatError(f"Row {iy} has {len(row)} glyphs, expected {width}")
        for ix, glyph in enumerate(row):
            if glyph == OCCUPIED_GLYPH:
                cells[iy, ix] = True
            elif glyph != FREE_GLYPH:
                raise GridFormatError(f"Unknown glyph {glyph!r} at cell ({ix}, {iy})")

    return OccupancyGrid(resolution, Pose2D(ox, oy, 0.0), cells)


def save_grid(grid: OccupancyGrid) -> str:
    """
    Encode a grid as `gridmap v1` text.

    The header is canonical: every float is written as its shortest repr
    (`0.0`, `0.05`, `-1.5`). load_grid followed by save_grid reproduces any
    text in this form byte for byte and rewrites other spellings canonically.
    """
    header = (f"{MAP_MAGIC}\n"
              f"resolution {grid.resolution!r} origin {grid.origin.x!r} {grid.origin.y!r} "
              f"size {grid.width} {grid.height}\n")
    glyphs = np.where(grid.cells, OCCUPIED_GLYPH, FREE_GLYPH)
    body = ''.join(''.join(row) + '\n' for row in glyphs)
    return header + body


# ---------------------------------------------------------------------------
# Coordinates
# ---------------------------------------------------------------------------

def world_to_cell(grid: OccupancyGrid, p: Sequence[float]) -> Optional[Cell]:
    """Cell containing point p, or None when p lies outside the grid."""
    ix = math.floor((p[0] - grid.origin.x) / grid.resolution)
    iy = math.floor((p[1] - grid.origin.y) / grid.resolution)
    if not grid.in_bounds(ix, iy):
        return None
    return (ix, iy)


def cell_to_world(grid: OccupancyGrid, cell: Cell) -> Point:
    """Center of a cell in world coordinates."""
    return (grid.origin.x + (cell[0] + 0.5) * grid.resolution,
            grid.origin.y + (cell[1] + 0.5) * grid.resolution)


# ---------------------------------------------------------------------------
# Footprints
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8192)
def footprint_cell_offsets(frac_x: float, frac_y: float, theta: float,
                           fp: Footprint, resolution: float) -> np.ndarray:
    """
    Cells covered by a footprint, relative to the cell holding its reference point.

    Args:
        frac_x, frac_y: Position of the reference point inside its cell, in cell
            units (0 <= frac < 1); 0 means the lower cell corner
        theta: Footprint heading
        fp: Footprint
        resolution: Cell size in meters

    Returns:
        Read-only (N, 2) int array of (dix, diy) offsets sorted by (diy, dix)
    """
    reach = int(math.ceil(fp.circumradius() / resolution)) + 1
    span = np.arange(-reach, reach + 1)
    di, dj = np.meshgrid(span, span)
    px = (di + 0.5 - frac_x) * resolution
    py = (dj + 0.5 - frac_y) * resolution
    c, s = math.cos(theta), math.sin(theta)
    inside = fp.contains_local(c * px + s * py, -s * px + c * py)
    offsets = np.column_stack([di[inside], dj[inside]]).astype(np.int64)
    offsets.setflags(write=False)
    return offsets


def _footprint_cell_array(grid: OccupancyGrid, pose: Pose2D, fp: Footprint) -> np.ndarray:
    fx = (pose.x - grid.origin.x) / grid.resolution
    fy = (pose.y - grid.origin.y) / grid.resolution
    bx, by = math.floor(fx), math.floor(fy)
    offsets = footprint_cell_offsets(fx - bx, fy - by, pose.theta, fp, grid.resolution)
    cells = offsets + np.array([bx, by], dtype=np.int64)
    keep = ((cells[:, 0] >= 0) & (cells[:, 0] < grid.width)
            & (cells[:, 1] >= 0) & (cells[:, 1] < grid.height))
    return cells[keep]


def footprint_cells(grid: OccupancyGrid, pose: Pose2D, fp: Footprint) -> List[Cell]:
    """
    In-bounds cells whose centers lie inside the footprint placed at pose.

    The result is ordered by (iy, ix).
    """
    return [(int(ix), int(iy)) for ix, iy in _footprint_cell_array(grid, pose, fp)]


def collision_free(grid: OccupancyGrid, pose: Pose2D, fp: Footprint) -> bool:
    """True iff no cell returned by footprint_cells is occupied."""
    cells = _footprint_cell_array(grid, pose, fp)
    if len(cells) == 0:
        return True
    return not bool(grid.cells[cells[:, 1], cells[:, 0]].any())


# ---------------------------------------------------------------------------
# Distance queries
# ---------------------------------------------------------------------------

class ObstacleIndex:
    """KD-tree over the centers of the occupied cells of a grid."""

    def __init__(self, grid: OccupancyGrid):
        self.resolution = grid.resolution
        occupied = grid.occupied_cells()
        self.count = len(occupied)
        if self.count:
            self.centers = np.column_stack([
                grid.origin.x + (occupied[:, 0] + 0.5) * grid.resolution,
                grid.origin.y + (occupied[:, 1] + 0.5) * grid.resolution,
            ])
            self.tree = cKDTree(self.centers)
        else:
            self.centers = np.zeros((0, 2))
            self.tree = None

    def center_distance(self, point: Sequence[float]) -> float:
        """Distance to the nearest occupied cell center (inf for an empty grid)."""
        if self.tree is None:
            return math.inf
        d, _ = self.tree.query(point)
        return float(d)

    def distance(self, point: Sequence[float]) -> float:
        """
        Exact distance from point to the nearest occupied cell square.

        Zero inside an occupied cell, inf when the grid has no occupied cell.
        """
        if self.tree is None:
            return math.inf
        d_center, _ = self.tree.query(point)
        half = 0.5 * self.resolution
        candidates = self.tree.query_ball_point(point, d_center + half * math.sqrt(2.0) + 1e-12)
        near = self.centers[candidates]
        gap = np.maximum(np.abs(near - np.asarray(point, dtype=float)) - half, 0.0)
        return float(np.min(np.hypot(gap[:, 0], gap[:, 1])))
