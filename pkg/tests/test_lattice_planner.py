import math

import numpy as np
import pytest

from trailer_nav.grid_world import OccupancyGrid, collision_free
from trailer_nav.lattice_planner import (InvalidStartError, PlannerError, PrimitiveFormatError,
                                         build_primitive, generate_primitives, load_primitives,
                                         path_curvatures, plan, replan_needed, save_primitives)
from trailer_nav.models import Circle, GoalTolerance, LatticeConfig, Pose2D, RectangleFootprint

from tests.oracles import (dense_collision_free, dijkstra_reference, discrete_curvatures,
                           numeric_report, random_grid)

SMALL_CFG = LatticeConfig(xy_resolution=0.1, num_headings=8, kappa_max=2.5,
                          primitive_lengths=(0.2, 0.4), footprint_margin=0.0)
SMALL_FP = RectangleFootprint(0.23, 0.17, 0.013)
SMALL_TOL = GoalTolerance(0.25, 0.4)


def _free_lattice_pose(grid, rng, cfg=SMALL_CFG, fp=SMALL_FP):
    n_points = int(round(grid.width * grid.resolution / cfg.xy_resolution))
    for _ in range(500):
        cx, cy = rng.integers(0, n_points, size=2)
        h = int(rng.integers(0, cfg.num_headings))
        pose = Pose2D(cx * cfg.xy_resolution, cy * cfg.xy_resolution, h * cfg.heading_bin)
        if dense_collision_free(grid, pose, fp):
            return pose
    return None


def test_build_primitive_straight_snaps_exactly():
    prim = build_primitive(LatticeConfig(xy_resolution=0.25), 0, 0.0, 0.5)
    assert prim.end_delta == (2, 0, 0)
    assert prim.path_length == pytest.approx(0.5)
    assert prim.sampled_poses[0] == Pose2D(0.0, 0.0, 0.0)
    assert prim.sampled_poses[-1] == Pose2D(0.5, 0.0, 0.0)


def test_primitive_at_curvature_limit_exists():
    cfg = LatticeConfig(xy_resolution=0.1, kappa_max=1.0, primitive_lengths=(0.4,))
    prims = generate_primitives(cfg)
    limit = [p for p in prims if p.start_heading_index == 0 and p.curvature == 1.0]
    assert limit
    assert limit[0].arc_length == pytest.approx(cfg.heading_bin)
    assert limit[0].end_delta == (4, 1, 1)
    assert all(abs(p.curvature) <= cfg.kappa_max for p in prims)
    assert [p.primitive_id for p in prims] == list(range(len(prims)))


def test_primitive_set_is_closed_under_quarter_turns():
    cfg = LatticeConfig()
    prims = generate_primitives(cfg)
    table = {(p.start_heading_index, p.end_delta, p.reverse): p.cost for p in prims}
    quarter = cfg.num_headings // 4
    for p in prims:
        dx, dy, dh = p.end_delta
        rotated = ((p.start_heading_index + quarter) % cfg.num_headings, (-dy, dx, dh), p.reverse)
        assert table[rotated] == p.cost


def test_primitive_samples_are_dense_enough():
    cfg = LatticeConfig()
    for p in generate_primitives(cfg):
        pts = np.array([[q.x, q.y] for q in p.sampled_poses])
        assert np.hypot(*np.diff(pts, axis=0).T).max() <= cfg.xy_resolution + 1e-12


def test_primset_text_regenerates_the_same_set():
    cfg = LatticeConfig(allow_reverse=True)
    prims = generate_primitives(cfg)
    text = save_primitives(prims, cfg)
    assert text.startswith("primset v1\nxy_resolution 0.1 num_headings 16\n")
    assert load_primitives(text, cfg) == prims
    with pytest.raises(PrimitiveFormatError):
        load_primitives(text, LatticeConfig(num_headings=8))
    with pytest.raises(PrimitiveFormatError):
        load_primitives(text.replace("primset v1", "primset v0"), cfg)


def test_straight_plan_on_open_grid(vehicle):
    grid = OccupancyGrid.empty(200, 200, 0.05)
    cfg = LatticeConfig.for_vehicle(vehicle)
    path = plan(grid, Pose2D(1.0, 1.0, 0.0), Pose2D(8.0, 1.0, 0.0), vehicle.trailer_footprint,
                cfg, GoalTolerance())
    assert path is not None
    assert path.length == pytest.approx(7.0, abs=0.1)
    assert path.total_cost == pytest.approx(7.0, abs=1e-9)
    assert np.allclose(path_curvatures(path), 0.0)
    assert path.poses[0] == Pose2D(1.0, 1.0, 0.0)
    assert path.end.x == pytest.approx(8.0)


def test_invalid_requests_raise(vehicle):
    grid = OccupancyGrid.empty(100, 100, 0.05)
    cfg = LatticeConfig.for_vehicle(vehicle)
    fp = vehicle.trailer_footprint
    with pytest.raises(PlannerError):
        plan(grid, Pose2D(1.0, 1.0, 0.0), Pose2D(6.0, 1.0, 0.0), fp, cfg, GoalTolerance())
    with pytest.raises(InvalidStartError):
        plan(grid, Pose2D(0.1, 0.1, 0.0), Pose2D(3.0, 2.0, 0.0), fp, cfg, GoalTolerance())
    with pytest.raises(PlannerError):
        plan(grid, Pose2D(1.0, 1.0, 0.0), Pose2D(3.0, 2.0, 0.0), fp,
             LatticeConfig(xy_resolution=0.12), GoalTolerance())


@pytest.mark.parametrize("seed", range(50))
def test_plan_cost_matches_exhaustive_search(seed):
    rng = np.random.default_rng(1000 + seed)
    grid = random_grid(seed, 20, 20, resolution=0.1, density=0.1)
    start = _free_lattice_pose(grid, rng)
    goal = _free_lattice_pose(grid, rng)
    if start is None or goal is None:
        pytest.skip("no free lattice state on this map")

    expected = dijkstra_reference(grid, generate_primitives(SMALL_CFG), SMALL_FP, start, goal,
                                  SMALL_TOL, SMALL_CFG)
    path = plan(grid, start, goal, SMALL_FP, SMALL_CFG, SMALL_TOL)
    actual = None if path is None else path.total_cost
    report = numeric_report(f"plan-{seed}", expected, actual, 1e-9)
    assert report.passed, report

    if path is not None:
        assert all(dense_collision_free(grid, q, SMALL_FP) for q in path.poses)
        assert max(discrete_curvatures(path.poses), default=0.0) <= SMALL_CFG.kappa_max * (1 + 1e-6)
        end = path.end
        assert math.hypot(end.x - goal.x, end.y - goal.y) <= SMALL_TOL.xy


def test_wall_splits_the_map_for_both_searches():
    grid = OccupancyGrid.empty(20, 20, 0.1).with_occupied([(10, iy) for iy in range(20)])
    start, goal = Pose2D(0.5, 1.0, 0.0), Pose2D(1.5, 1.0, 0.0)
    assert plan(grid, start, goal, SMALL_FP, SMALL_CFG, SMALL_TOL) is None
    assert dijkstra_reference(grid, generate_primitives(SMALL_CFG), SMALL_FP, start, goal,
                              SMALL_TOL, SMALL_CFG) is None


@pytest.mark.parametrize("seed", range(10))
def test_adding_obstacles_never_lowers_cost(seed):
    rng = np.random.default_rng(seed)
    grid = random_grid(seed, 20, 20, resolution=0.1, density=0.05)
    start = _free_lattice_pose(grid, rng)
    goal = _free_lattice_pose(grid, rng)
    if start is None or goal is None:
        pytest.skip("no free lattice state on this map")
    before = plan(grid, start, goal, SMALL_FP, SMALL_CFG, SMALL_TOL)

    extra = [tuple(int(v) for v in rng.integers(0, 20, size=2)) for _ in range(5)]
    harder = grid.with_occupied(extra)
    if not dense_collision_free(harder, start, SMALL_FP):
        return
    after = plan(harder, start, goal, SMALL_FP, SMALL_CFG, SMALL_TOL)
    if before is None:
        assert after is None
    elif after is not None:
        assert after.total_cost >= before.total_cost - 1e-9


def test_replan_needed_only_when_path_is_blocked(vehicle):
    grid = OccupancyGrid.empty(200, 200, 0.05)
    fp = vehicle.trailer_footprint
    path = plan(grid, Pose2D(1.0, 1.0, 0.0), Pose2D(8.0, 1.0, 0.0), fp,
                LatticeConfig.for_vehicle(vehicle), GoalTolerance())
    assert not replan_needed(path, grid, fp)
    wall = grid.with_occupied([(90, iy) for iy in range(0, 60)])
    assert replan_needed(path, wall, fp)
    far = grid.with_occupied([(190, 190)])
    assert not replan_needed(path, far, fp)
    last = len(path.poses) - 1
    assert not replan_needed(path, wall, fp, from_index=last)


def test_planning_footprint_keeps_the_tractor_zone_clear(vehicle):
    # wall from x = 5.9 m: room for the trailer body at x = 5.0, not for the tractor ahead of it
    wall = [(ix, iy) for ix in range(118, 200) for iy in range(60)]
    grid = OccupancyGrid.empty(200, 60, 0.05).with_occupied(wall)
    cfg = LatticeConfig.for_vehicle(vehicle)
    start, goal = Pose2D(1.0, 1.5, 0.0), Pose2D(5.0, 1.5, 0.0)
    trailer_only = plan(grid, start, goal, vehicle.trailer_footprint, cfg, GoalTolerance())
    assert trailer_only is not None
    assert plan(grid, start, goal, vehicle.planning_footprint, cfg, GoalTolerance()) is None

    shorter = plan(grid, start, Pose2D(4.0, 1.5, 0.0), vehicle.planning_footprint, cfg,
                   GoalTolerance())
    assert shorter is not None
    zone = Circle(vehicle.wheelbase_L, vehicle.safety_radius)
    assert all(collision_free(grid, q, zone) for q in shorter.poses)
    assert all(collision_free(grid, q, vehicle.trailer_footprint) for q in shorter.poses)
