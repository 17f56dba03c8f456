import numpy as np
import pytest

from trailer_nav.experiments import make_loop_course, make_single_corner
from trailer_nav.grid_world import OccupancyGrid, cell_to_world, load_grid
from trailer_nav.map_cover import (CoverFormatError, RectCover, build_cover, covers_point,
                                   filter_points, load_cover, save_cover)

from tests.oracles import coverage_verifier, random_grid


@pytest.mark.parametrize("seed", range(100))
def test_cover_is_exact_on_random_maps(seed):
    grid = random_grid(seed, 30, 30, resolution=0.1, density=0.3)
    report = coverage_verifier(grid, build_cover(grid).rects, f"random-{seed}")
    assert report.passed, report


@pytest.mark.parametrize("build", [make_loop_course, make_single_corner])
@pytest.mark.parametrize("width", [1.0, 1.6, 3.0])
def test_cover_is_exact_on_experiment_layouts(build, width):
    grid, _ = build(width)
    report = coverage_verifier(grid, build_cover(grid).rects, f"{build.__name__}-{width}")
    assert report.passed, report


def test_known_map_decomposition():
    grid = load_grid("gridmap v1\nresolution 0.1 origin 0.0 0.0 size 4 3\n"
                     "..#.\n"
                     "..#.\n"
                     "....\n")
    cover = build_cover(grid)
    assert cover.rects == ((0, 0, 1, 2), (3, 0, 3, 2), (2, 2, 2, 2))
    assert cover.source_grid_id == grid.fingerprint()


def test_degenerate_maps():
    assert len(build_cover(OccupancyGrid.empty(7, 5, 0.1))) == 1
    full = OccupancyGrid(0.1, OccupancyGrid.empty(1, 1, 0.1).origin, np.ones((4, 4), dtype=bool))
    assert len(build_cover(full)) == 0


def test_covers_point_matches_cell_occupancy():
    grid = random_grid(5, 30, 30, resolution=0.1, density=0.3)
    cover = build_cover(grid)
    for iy in range(grid.height):
        for ix in range(grid.width):
            assert covers_point(cover, grid, cell_to_world(grid, (ix, iy))) == (
                not grid.is_occupied(ix, iy))
    assert not covers_point(cover, grid, (-0.5, 1.0))
    assert not covers_point(cover, grid, (3.5, 1.0))


def test_filter_points_keeps_order():
    grid = OccupancyGrid.empty(10, 10, 0.1).with_occupied([(5, 5)])
    cover = build_cover(grid)
    pts = [(0.95, 0.95), (0.55, 0.55), (0.15, 0.25), (1.5, 0.2), (0.52, 0.58), (0.05, 0.05)]
    assert filter_points(cover, grid, pts) == [(0.95, 0.95), (0.15, 0.25), (0.05, 0.05)]


def test_cover_text_round_trip():
    grid = random_grid(11, 30, 30, resolution=0.1, density=0.3)
    cover = build_cover(grid)
    text = save_cover(cover)
    assert text.startswith(f"cover v1\nsource {grid.fingerprint()} count {len(cover)}\n")
    assert load_cover(text) == cover
    assert save_cover(load_cover(text)) == text


@pytest.mark.parametrize("text", [
    "cover v2\nsource abc count 0\n",
    "cover v1\nsource abc count 2\n0 0 1 1\n",
    "cover v1\nsource abc count 1\n0 0 1\n",
    "cover v1\nsource abc count 1\n2 0 1 1\n",
    "cover v1\nsource abc\n",
])
def test_load_cover_rejects_malformed_text(text):
    with pytest.raises(CoverFormatError):
        load_cover(text)


def test_rect_cover_rejects_inverted_rectangles():
    with pytest.raises(ValueError):
        RectCover(((3, 0, 1, 1),), 'x')


def test_overlapping_rectangles_are_rejected():
    # (0..5, 0..0) hides the start of (2..3, 0..2) from a row lookup
    with pytest.raises(ValueError, match='overlap'):
        RectCover(((0, 0, 5, 0), (2, 0, 3, 2)), 'x')
    text = "cover v1\nsource abc count 2\n0 0 5 0\n2 0 3 2\n"
    with pytest.raises(CoverFormatError, match='overlap'):
        load_cover(text)
    touching = RectCover(((0, 0, 1, 0), (2, 0, 3, 2)), 'x')
    assert all(touching.contains_cell(ix, 0) for ix in range(4))
    assert touching.contains_cell(3, 2) and not touching.contains_cell(1, 1)
