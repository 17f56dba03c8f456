"""
Deterministic closed-loop simulation.

Each target is served by one global plan followed by a fixed-step loop of
path tracking, hitch control and kinematic integration. The loop checks the
goal, the circular safety zone around the tractor and the timeout on every
step. When dynamic obstacles are present, a perception cycle samples them,
drops points on known structure through the whitelist cover and replans when
the remaining path becomes blocked.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .angles import angle_diff
from .grid_world import OccupancyGrid, world_to_cell
from .hitch_controller import ControllerSession, control_step
from .kinematics import MAX_DT, step
from .lattice_planner import InvalidStartError, PlannerError, plan, replan_needed
from .map_cover import RectCover, build_cover, filter_points
from .models import (AbortReason, DynamicObstacle, GlobalPath, GoalTolerance, LatticeConfig,
                     Pose2D, TargetResult, TractorCommand, TrackerConfig, TrackingState,
                     TrailerState, TrajectorySample, VehicleParams)
from .path_tracker import TrackerSession, track

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ['t', 'x_trailer', 'y_trailer', 'theta', 'delta',
                      'x_tractor', 'y_tractor', 'v_cmd', 'omega_cmd']

DEFAULT_TIMEOUT = 120.0
DEFAULT_MAX_REPLANS = 3


@dataclass
class SimWorld:
    """
    Mutable simulation world owned by one simulation loop.

    static_grid is the known map; dynamic obstacles move with constant
    velocity and bounce back when they would hit a wall or leave the map.
    """
    static_grid: OccupancyGrid
    dynamic_obstacles: List[DynamicObstacle] = field(default_factory=list)
    time: float = 0.0
    dt: float = 0.02
    rng_seed: int = 0
    sensing_radius: float = 4.0
    perception_period: float = 0.2
    _cover: Optional[RectCover] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.dt <= MAX_DT:
            raise ValueError(f"dt must lie in (0, {MAX_DT}]")
        if self.sensing_radius < 0 or not self.perception_period > 0:
            raise ValueError("sensing_radius must be >= 0 and perception_period > 0")
        self.dynamic_obstacles = list(self.dynamic_obstacles)

    @property
    def step_index(self) -> int:
        return int(round(self.time / self.dt))

    @property
    def cover(self) -> RectCover:
        if self._cover is None:
            self._cover = build_cover(self.static_grid)
        return self._cover

    def advance(self) -> None:
        """Move the dynamic obstacles by one step and advance the clock."""
        index = self.static_grid.obstacle_index
        width_m, height_m = self.static_grid.size_m
        ox, oy = self.static_grid.origin.x, self.static_grid.origin.y
        moved = []
        for ob in self.dynamic_obstacles:
            cx = ob.center[0] + ob.velocity[0] * self.dt
            cy = ob.center[1] + ob.velocity[1] * self.dt
            inside = (ox + ob.radius <= cx <= ox + width_m - ob.radius
                      and oy + ob.radius <= cy <= oy + height_m - ob.radius)
            if inside and index.distance((cx, cy)) >= ob.radius:
                moved.append(DynamicObstacle((cx, cy), ob.radius, ob.velocity))
            else:
                moved.append(DynamicObstacle(ob.center, ob.radius,
                                             (-ob.velocity[0], -ob.velocity[1])))
        self.dynamic_obstacles = moved
        self.time += self.dt


# ---------------------------------------------------------------------------
# Perception
# ---------------------------------------------------------------------------

def sense_points(world: SimWorld, s: TrailerState, p: VehicleParams,
                 sensing_radius: Optional[float] = None) -> List[Tuple[float, float]]:
    """
    Sample points seen around the tractor.

    Returns occupied cell centers of the static map within the sensing radius,
    then boundary samples of every dynamic obstacle reaching into it (at least
    8 per obstacle, random phase). The sample phase is drawn from a generator
    seeded with (rng_seed, step index), so results are reproducible.
    """
    radius = world.sensing_radius if sensing_radius is None else sensing_radius
    tractor = s.tractor_pose(p)
    center = (tractor.x, tractor.y)
    points: List[Tuple[float, float]] = []

    index = world.static_grid.obstacle_index
    if index.tree is not None:
        for i in sorted(index.tree.query_ball_point(center, radius)):
            points.append((float(index.centers[i, 0]), float(index.centers[i, 1])))

    rng = np.random.default_rng([world.rng_seed, world.step_index])
    res = world.static_grid.resolution
    for ob in world.dynamic_obstacles:
        if math.hypot(ob.center[0] - center[0], ob.center[1] - center[1]) - ob.radius > radius:
            continue
        count = max(8, math.ceil(2.0 * math.pi * ob.radius / res))
        angles = rng.uniform(0.0, 2.0 * math.pi) + 2.0 * math.pi * np.arange(count) / count
        points.extend((float(ob.center[0] + ob.radius * math.cos(a)),
                       float(ob.center[1] + ob.radius * math.sin(a))) for a in angles)
    return points


def rasterize_points(grid: OccupancyGrid, pts: Sequence[Tuple[float, float]]) -> OccupancyGrid:
    """Grid with the cells holding pts marked occupied."""
    cells = [c for c in (world_to_cell(grid, pt) for pt in pts) if c is not None]
    if not cells:
        return grid
    return grid.with_occupied(cells)


def safety_violation(world: SimWorld, s: TrailerState, p: VehicleParams) -> bool:
    """True when a wall or dynamic obstacle lies within safety_radius of the tractor."""
    tractor = s.tractor_pose(p)
    if world.static_grid.obstacle_index.distance((tractor.x, tractor.y)) < p.safety_radius:
        return True
    for ob in world.dynamic_obstacles:
        gap = math.hypot(ob.center[0] - tractor.x, ob.center[1] - tractor.y) - ob.radius
        if gap < p.safety_radius:
            return True
    return False


def within_tolerance(pose: Pose2D, target: Pose2D, tol: GoalTolerance) -> bool:
    return (math.hypot(pose.x - target.x, pose.y - target.y) <= tol.xy
            and abs(angle_diff(pose.theta, target.theta)) <= tol.theta)


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------

def _plan_path(grid: OccupancyGrid, start: Pose2D, target: Pose2D, p: VehicleParams,
               lattice_cfg: LatticeConfig, tol: GoalTolerance) -> Optional[GlobalPath]:
    try:
        return plan(grid, start, target, p.planning_footprint, lattice_cfg, tol)
    except InvalidStartError:
        if lattice_cfg.footprint_margin == 0:
            logger.info("Start pose in collision, no path")
            return None
        logger.info("Start pose in collision with the inflated footprint, retrying without margin")
        try:
            return plan(grid, start, target, p.planning_footprint,
                        replace(lattice_cfg, footprint_margin=0.0), tol)
        except PlannerError as e:
            logger.info(f"Planning failed: {e}")
            return None
    except PlannerError as e:
        logger.info(f"Planning failed: {e}")
        return None


def _tracker_config_for(path: GlobalPath, target: Pose2D, cfg: TrackerConfig,
                        tol: GoalTolerance) -> TrackerConfig:
    """Tracker goal tolerance shrunk so reaching the path end implies reaching the target."""
    end = path.end
    xy = max(0.0, min(cfg.goal_tol.xy, tol.xy - math.hypot(end.x - target.x, end.y - target.y)))
    theta = max(0.0, min(cfg.goal_tol.theta, tol.theta - abs(angle_diff(end.theta, target.theta))))
    return replace(cfg, goal_tol=GoalTolerance(xy, theta))


def run_to_target(world: SimWorld, s: TrailerState, target: Pose2D, p: VehicleParams,
                  lattice_cfg: LatticeConfig, tracker_cfg: TrackerConfig,
                  tolerances: Optional[GoalTolerance] = None,
                  timeout: float = DEFAULT_TIMEOUT,
                  max_replans: int = DEFAULT_MAX_REPLANS) -> Tuple[TargetResult, TrailerState]:
    """
    Drive to one target.

    Args:
        world: Simulation world, advanced in place
        s: State at the start of the attempt
        target: Target trailer pose
        p: Vehicle parameters
        lattice_cfg: Global planner configuration
        tracker_cfg: Local tracker configuration
        tolerances: Success tolerance (defaults to 0.5 m / 0.2 rad)
        timeout: Seconds before the attempt is aborted
        max_replans: Replans allowed when the path becomes blocked

    Returns:
        (TargetResult, final state); every outcome is reported in the result
    """
    if not timeout > 0:
        raise ValueError("timeout must be positive")
    tol = tolerances or GoalTolerance()
    dt = world.dt
    t0 = world.time
    samples = [TrajectorySample(world.time, s, TractorCommand(0.0, 0.0))]

    def finish(reached: bool, reason: AbortReason, replans: int) -> Tuple[TargetResult, TrailerState]:
        duration = world.time - t0
        if reached:
            logger.info(f"Target ({target.x:.2f}, {target.y:.2f}) reached in {duration:.1f} s")
        else:
            logger.info(f"Target ({target.x:.2f}, {target.y:.2f}) aborted: {reason.value} "
                        f"after {duration:.1f} s")
        return TargetResult(target, reached, duration, reason, tuple(samples), replans), s

    path = _plan_path(world.static_grid, s.trailer_pose, target, p, lattice_cfg, tol)
    if path is None:
        return finish(False, AbortReason.NO_PATH, 0)

    cfg = _tracker_config_for(path, target, tracker_cfg, tol)
    planning_fp = p.planning_footprint.inflated(lattice_cfg.footprint_margin)
    session = TrackerSession()
    ctrl = ControllerSession()
    perceived = world.static_grid
    perception_every = max(1, int(round(world.perception_period / dt)))
    replans = 0
    steps = 0

    while True:
        if within_tolerance(s.trailer_pose, target, tol):
            return finish(True, AbortReason.NONE, replans)
        if safety_violation(world, s, p):
            return finish(False, AbortReason.SAFETY_ZONE, replans)
        if world.time - t0 >= timeout - 1e-9:
            return finish(False, AbortReason.TIMEOUT, replans)

        if world.dynamic_obstacles and steps % perception_every == 0:
            kept = filter_points(world.cover, world.static_grid, sense_points(world, s, p))
            perceived = rasterize_points(world.static_grid, kept)
            if replans < max_replans and replan_needed(path, perceived, planning_fp,
                                                       session.progress_index):
                replans += 1
                logger.info(f"Path blocked, replanning ({replans}/{max_replans})")
                fresh = _plan_path(perceived, s.trailer_pose, target, p, lattice_cfg, tol)
                if fresh is not None:
                    path = fresh
                    cfg = _tracker_config_for(path, target, tracker_cfg, tol)
                    session = TrackerSession()

        command, status = track(path, s, perceived, cfg, p, session, dt)
        # a tracker-side goal_reached is settled by the tolerance and timeout checks
        if status.state is TrackingState.STUCK:
            return finish(False, AbortReason.TRACKER_STUCK, replans)

        tractor_cmd = control_step(command, s, p, ctrl)
        s = step(s, tractor_cmd, dt, p)
        world.advance()
        steps += 1
        samples.append(TrajectorySample(world.time, s, tractor_cmd))


def run_sequence(world: SimWorld, s0: TrailerState, targets: Sequence[Pose2D], p: VehicleParams,
                 lattice_cfg: LatticeConfig, tracker_cfg: TrackerConfig,
                 tolerances: Optional[GoalTolerance] = None,
                 timeout: float = DEFAULT_TIMEOUT,
                 max_replans: int = DEFAULT_MAX_REPLANS) -> List[TargetResult]:
    """
    Visit targets in order, threading the vehicle state between attempts.

    A failed target does not stop the sequence; a safety-zone abort ends it.
    """
    if not targets:
        raise ValueError("targets must not be empty")
    results: List[TargetResult] = []
    s = s0
    for target in targets:
        result, s = run_to_target(world, s, target, p, lattice_cfg, tracker_cfg,
                                  tolerances, timeout, max_replans)
        results.append(result)
        if result.abort_reason is AbortReason.SAFETY_ZONE:
            logger.info("Safety zone violated, remaining targets skipped")
            break
    return results


def trajectory_frame(result: TargetResult, p: VehicleParams) -> pd.DataFrame:
    """Trajectory samples as a DataFrame with the trajectory CSV columns."""
    rows = []
    for sample in result.trajectory:
        pose = sample.state.trailer_pose
        tractor = sample.state.tractor_pose(p)
        rows.append((sample.t, pose.x, pose.y, pose.theta, sample.state.delta,
                     tractor.x, tractor.y, sample.command.v, sample.command.omega))
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)
