import math

import pytest

from trailer_nav import simulator
from trailer_nav.grid_world import OccupancyGrid
from trailer_nav.models import (AbortReason, DynamicObstacle, GoalTolerance, LatticeConfig, Pose2D,
                                TrackerStatus, TrackingState, TrailerState, VelocityCommand)
from trailer_nav.simulator import (TRAJECTORY_COLUMNS, SimWorld, rasterize_points, run_sequence,
                                   run_to_target, safety_violation, sense_points, trajectory_frame,
                                   within_tolerance)


@pytest.fixture
def lattice_cfg(vehicle):
    return LatticeConfig.for_vehicle(vehicle)


def _oncoming_world(corridor):
    return SimWorld(corridor, [DynamicObstacle((8.5, 1.5), 0.8, (-0.8, 0.0))], rng_seed=4)


def test_reaches_target_on_open_field(open_field, vehicle, lattice_cfg, tracker_cfg):
    world = SimWorld(open_field)
    result, final = run_to_target(world, TrailerState(Pose2D(2.0, 5.0, 0.0)), Pose2D(7.0, 5.0, 0.0),
                                  vehicle, lattice_cfg, tracker_cfg)
    assert result.reached
    assert result.abort_reason is AbortReason.NONE
    assert 5.8 <= result.duration <= 10.8
    assert within_tolerance(final.trailer_pose, Pose2D(7.0, 5.0, 0.0), GoalTolerance())
    assert result.trajectory[0].t == 0.0
    assert result.trajectory[-1].state == final
    assert result.duration == pytest.approx(world.time)


def test_sequence_skips_unreachable_target(open_field, vehicle, lattice_cfg, tracker_cfg):
    block = [(ix, iy) for ix in range(160, 180) for iy in range(160, 180)]
    world = SimWorld(open_field.with_occupied(block))
    targets = [Pose2D(6.0, 2.0, 0.0), Pose2D(8.5, 8.5, 0.0), Pose2D(8.0, 2.0, 0.0)]
    results = run_sequence(world, TrailerState(Pose2D(2.0, 2.0, 0.0)), targets, vehicle,
                           lattice_cfg, tracker_cfg)
    assert [r.reached for r in results] == [True, False, True]
    assert results[1].abort_reason is AbortReason.NO_PATH
    assert results[1].duration == 0.0
    assert [r.target for r in results] == targets


def test_oncoming_obstacle_ends_the_sequence(corridor, vehicle, lattice_cfg, tracker_cfg):
    targets = [Pose2D(8.0, 1.5, 0.0), Pose2D(1.5, 1.5, 0.0)]
    results = run_sequence(_oncoming_world(corridor), TrailerState(Pose2D(1.5, 1.5, 0.0)), targets,
                           vehicle, lattice_cfg, tracker_cfg)
    assert len(results) == 1
    assert results[0].abort_reason is AbortReason.SAFETY_ZONE
    assert not results[0].reached


def test_simulation_is_deterministic(corridor, vehicle, lattice_cfg, tracker_cfg):
    def run():
        return run_sequence(_oncoming_world(corridor), TrailerState(Pose2D(1.5, 1.5, 0.0)),
                            [Pose2D(8.0, 1.5, 0.0)], vehicle, lattice_cfg, tracker_cfg)

    first, second = run(), run()
    assert first == second
    assert trajectory_frame(first[0], vehicle).equals(trajectory_frame(second[0], vehicle))


def test_timeout_aborts_attempt(open_field, vehicle, lattice_cfg, tracker_cfg):
    world = SimWorld(open_field)
    result, _ = run_to_target(world, TrailerState(Pose2D(2.0, 5.0, 0.0)), Pose2D(8.0, 5.0, 0.0),
                              vehicle, lattice_cfg, tracker_cfg, timeout=1.0)
    assert result.abort_reason is AbortReason.TIMEOUT
    assert result.duration == pytest.approx(1.0, abs=0.03)
    with pytest.raises(ValueError):
        run_to_target(world, TrailerState(Pose2D(2.0, 5.0, 0.0)), Pose2D(8.0, 5.0, 0.0),
                      vehicle, lattice_cfg, tracker_cfg, timeout=0.0)


def test_tracker_goal_outside_tolerance_runs_until_timeout(open_field, vehicle, lattice_cfg,
                                                           tracker_cfg, monkeypatch):
    def parked(path, s, grid, cfg, p, session=None, dt=0.0):
        return VelocityCommand(0.0, 0.0), TrackerStatus(TrackingState.GOAL_REACHED, 0, 0.0)

    monkeypatch.setattr(simulator, 'track', parked)
    result, final = run_to_target(SimWorld(open_field), TrailerState(Pose2D(2.0, 5.0, 0.0)),
                                  Pose2D(8.0, 5.0, 0.0), vehicle, lattice_cfg, tracker_cfg,
                                  timeout=0.5)
    assert result.abort_reason is AbortReason.TIMEOUT
    assert not result.reached
    assert final.trailer_pose == Pose2D(2.0, 5.0, 0.0)


def test_sequence_requires_targets(open_field, vehicle, lattice_cfg, tracker_cfg):
    with pytest.raises(ValueError):
        run_sequence(SimWorld(open_field), TrailerState(Pose2D(2.0, 2.0, 0.0)), [], vehicle,
                     lattice_cfg, tracker_cfg)


def test_trajectory_frame_columns(open_field, vehicle, lattice_cfg, tracker_cfg):
    result, _ = run_to_target(SimWorld(open_field), TrailerState(Pose2D(2.0, 5.0, 0.0)),
                              Pose2D(8.0, 5.0, 0.0), vehicle, lattice_cfg, tracker_cfg, timeout=0.5)
    frame = trajectory_frame(result, vehicle)
    assert list(frame.columns) == TRAJECTORY_COLUMNS
    assert len(frame) == len(result.trajectory)
    first = frame.iloc[0]
    assert (first['x_trailer'], first['x_tractor']) == (2.0, 3.0)
    assert (first['v_cmd'], first['omega_cmd']) == (0.0, 0.0)
    assert frame['t'].is_monotonic_increasing


def test_sense_points(open_field, vehicle):
    s = TrailerState(Pose2D(3.0, 5.0, 0.0))
    assert sense_points(SimWorld(open_field), s, vehicle, sensing_radius=0.0) == []

    world = SimWorld(open_field, [DynamicObstacle((5.0, 5.0), 0.3)], rng_seed=9)
    pts = sense_points(world, s, vehicle)
    assert len(pts) >= 8
    for x, y in pts:
        assert math.hypot(x - 5.0, y - 5.0) == pytest.approx(0.3)
    assert sense_points(world, s, vehicle) == pts
    assert sense_points(world, s, vehicle, sensing_radius=0.5) == []


def test_sense_points_include_static_cells_in_range(corridor, vehicle):
    s = TrailerState(Pose2D(1.5, 1.5, 0.0))
    pts = sense_points(SimWorld(corridor), s, vehicle, sensing_radius=1.5)
    assert pts
    assert all(math.hypot(x - 2.5, y - 1.5) <= 1.5 for x, y in pts)
    assert all(y < 0.2 or y > 2.8 for _, y in pts)


def test_rasterize_points_marks_cells():
    grid = OccupancyGrid.empty(10, 10, 0.1)
    marked = rasterize_points(grid, [(0.25, 0.35), (5.0, 5.0)])
    assert marked.is_occupied(2, 3)
    assert len(marked.occupied_cells()) == 1
    assert rasterize_points(grid, []) is grid


def test_safety_violation(corridor, vehicle):
    near_wall = TrailerState(Pose2D(1.5, 0.5, 0.0))
    assert safety_violation(SimWorld(corridor), near_wall, vehicle)
    centered = TrailerState(Pose2D(1.5, 1.5, 0.0))
    assert not safety_violation(SimWorld(corridor), centered, vehicle)
    crowded = SimWorld(corridor, [DynamicObstacle((3.0, 1.5), 0.2)])
    assert safety_violation(crowded, centered, vehicle)


def test_obstacle_bounces_at_map_edge(open_field):
    world = SimWorld(open_field, [DynamicObstacle((9.69, 5.0), 0.3, (1.0, 0.0))])
    world.advance()
    assert world.dynamic_obstacles[0].center == (9.69, 5.0)
    assert world.dynamic_obstacles[0].velocity == (-1.0, -0.0)
    world.advance()
    assert world.dynamic_obstacles[0].center[0] == pytest.approx(9.67)
    assert world.time == pytest.approx(0.04)
    assert world.step_index == 2


def test_world_rejects_bad_step(open_field):
    with pytest.raises(ValueError):
        SimWorld(open_field, dt=0.5)
