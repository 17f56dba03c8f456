"""
Whitelist rectangles over the free space of a grid map.

build_cover scans the map row by row; the first free, uncovered cell opens a
rectangle that grows along x over free uncovered cells, then along y while the
whole row span stays free and uncovered. The resulting rectangles are
disjoint and cover exactly the free cells. Points are kept by filter_points
when they fall inside some rectangle.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .grid_world import OccupancyGrid, world_to_cell

logger = logging.getLogger(__name__)

COVER_MAGIC = 'cover v1'

Rect = Tuple[int, int, int, int]


class CoverFormatError(Exception):
    """Custom exception for malformed cover files."""
    pass


@dataclass(frozen=True)
class RectCover:
    """
    Disjoint cell rectangles (min_x, min_y, max_x, max_y), bounds inclusive.
    Overlapping rectangles are rejected with ValueError.

    Rectangles are bucketed by row for point queries: rows[iy] holds the
    sorted min_x values and matching rectangles crossing that row.
    """
    rects: Tuple[Rect, ...]
    source_grid_id: str
    _rows: Dict[int, Tuple[np.ndarray, Tuple[Rect, ...]]] = field(
        default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        rects = tuple(tuple(int(v) for v in r) for r in self.rects)
        for r in rects:
            if len(r) != 4 or r[0] > r[2] or r[1] > r[3] or r[0] < 0 or r[1] < 0:
                raise ValueError(f"Invalid rectangle {r}")
        object.__setattr__(self, 'rects', rects)
        buckets: Dict[int, List[Rect]] = {}
        for r in rects:
            for iy in range(r[1], r[3] + 1):
                buckets.setdefault(iy, []).append(r)
        rows = {}
        for iy, items in buckets.items():
            items.sort()
            for a, b in zip(items, items[1:]):
                if b[0] <= a[2]:
                    raise ValueError(f"Rectangles {a} and {b} overlap in row {iy}")
            rows[iy] = (np.array([r[0] for r in items]), tuple(items))
        object.__setattr__(self, '_rows', rows)

    def __len__(self) -> int:
        return len(self.rects)

    def contains_cell(self, ix: int, iy: int) -> bool:
        bucket = self._rows.get(iy)
        if bucket is None:
            return False
        starts, items = bucket
        pos = int(np.searchsorted(starts, ix, side='right')) - 1
        return pos >= 0 and items[pos][2] >= ix


def build_cover(grid: OccupancyGrid) -> RectCover:
    """
    Greedy row-wise rectangle decomposition of the free cells.

    Args:
        grid: Source grid

    Returns:
        RectCover whose rectangles are disjoint and cover every free cell; an
        all-occupied grid yields an empty cover
    """
    free = ~grid.cells
    covered = np.zeros_like(free)
    rects: List[Rect] = []
    height, width = free.shape
    for iy in range(height):
        ix = 0
        while ix < width:
            if not free[iy, ix] or covered[iy, ix]:
                ix += 1
                continue
            max_x = ix
            while max_x + 1 < width and free[iy, max_x + 1] and not covered[iy, max_x + 1]:
                max_x += 1
            max_y = iy
            while (max_y + 1 < height and free[max_y + 1, ix:max_x + 1].all()
                   and not covered[max_y + 1, ix:max_x + 1].any()):
                max_y += 1
            covered[iy:max_y + 1, ix:max_x + 1] = True
            rects.append((ix, iy, max_x, max_y))
            ix = max_x + 1
    logger.debug(f"Built cover with {len(rects)} rectangles")
    return RectCover(tuple(rects), grid.fingerprint())


def covers_point(cover: RectCover, grid: OccupancyGrid, p: Sequence[float]) -> bool:
    """True iff the cell holding p lies inside some rectangle of the cover."""
    cell = world_to_cell(grid, p)
    if cell is None:
        return False
    return cover.contains_cell(*cell)


def filter_points(cover: RectCover, grid: OccupancyGrid,
                  pts: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Points of pts covered by the whitelist, original order preserved."""
    return [pt for pt in pts if covers_point(cover, grid, pt)]


def save_cover(cover: RectCover) -> str:
    """Encode a cover as `cover v1` text."""
    lines = [COVER_MAGIC, f"source {cover.source_grid_id} count {len(cover.rects)}"]
    lines += [f"{a} {b} {c} {d}" for a, b, c, d in cover.rects]
    return '\n'.join(lines) + '\n'


def load_cover(text: str) -> RectCover:
    """
    Parse `cover v1` text.

    Raises:
        CoverFormatError: If the header is malformed, the count does not match
            or a rectangle line is invalid
    """
    lines = text.split('\n')
    if lines and lines[-1] == '':
        lines.pop()
    if len(lines) < 2 or lines[0] != COVER_MAGIC:
        raise CoverFormatError(f"Missing '{COVER_MAGIC}' header line")
    header = lines[1].split(' ')
    if len(header) != 4 or header[0] != 'source' or header[2] != 'count':
        raise CoverFormatError(f"Malformed header line: {lines[1]!r}")
    try:
        count = int(header[3])
    except ValueError as e:
        raise CoverFormatError(f"Malformed rectangle count: {header[3]!r}") from e
    body = lines[2:]
    if len(body) != count:
        raise CoverFormatError(f"Header declares {count} rectangles, found {len(body)}")
    rects = []
    for lineno, line in enumerate(body, start=3):
        try:
            values = tuple(int(v) for v in line.split(' '))
        except ValueError as e:
            raise CoverFormatError(f"Line {lineno}: {e}") from e
        if len(values) != 4:
            raise CoverFormatError(f"Line {lineno}: expected 4 integers")
        rects.append(values)
    try:
        return RectCover(tuple(rects), header[1])
    except ValueError as e:
        raise CoverFormatError(str(e)) from e
