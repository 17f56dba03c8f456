"""
Local path tracking for the trailer axle.

A pure-pursuit tracker follows the global path in the bicycle frame anchored at
the trailer axle. Its speed governor slows down near the goal, ahead of curved
path sections and when the Two Circles footprint approaches occupied cells.
Goal, blocked and stuck conditions are reported through TrackerStatus.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .angles import angle_diff
from .grid_world import OccupancyGrid
from .models import (GlobalPath, Pose2D, TrackerConfig, TrackerStatus, TrackingState,
                     TrailerState, VehicleParams, VelocityCommand)

logger = logging.getLogger(__name__)


@dataclass
class TrackerSession:
    """Progress and timers of one goal attempt, owned by one simulation loop."""
    progress_index: int = 0
    best_goal_distance: float = math.inf
    time_without_progress: float = 0.0
    blocked_time: float = 0.0


def two_circle_centers(s: TrailerState, p: VehicleParams):
    """World centers and radii of the Two Circles footprint for state s."""
    theta = s.trailer_pose.theta
    tractor = s.tractor_pose(p)
    c, sn = math.cos(theta), math.sin(theta)
    return [((tractor.x + circle.offset_x * c, tractor.y + circle.offset_x * sn), circle.radius)
            for circle in p.two_circles.circles]


def footprint_clearance(s: TrailerState, grid: OccupancyGrid, p: VehicleParams) -> float:
    """Smallest gap between a footprint circle and an occupied cell center."""
    index = grid.obstacle_index
    return min(index.center_distance(center) - radius
               for center, radius in two_circle_centers(s, p))


def _closest_index(path: GlobalPath, position: np.ndarray, start: int, window: float) -> int:
    cum = path.cumulative_length
    stop = int(np.searchsorted(cum, cum[start] + window, side='right'))
    stop = max(stop, start + 1)
    d = np.hypot(*(path.positions[start:stop] - position).T)
    return start + int(np.argmin(d))


def lookahead_point(path: GlobalPath, index: int, distance: float) -> Tuple[float, float]:
    """
    Point at arc length `distance` past path pose `index`.

    Beyond the path end the path is extended along its final heading.
    """
    cum = path.cumulative_length
    target = cum[index] + distance
    if target >= cum[-1]:
        end = path.end
        extra = target - cum[-1]
        return (end.x + extra * math.cos(end.theta), end.y + extra * math.sin(end.theta))
    j = int(np.searchsorted(cum, target, side='right'))
    seg = cum[j] - cum[j - 1]
    t = 0.0 if seg <= 0 else (target - cum[j - 1]) / seg
    a, b = path.positions[j - 1], path.positions[j]
    return (float(a[0] + t * (b[0] - a[0])), float(a[1] + t * (b[1] - a[1])))


def turn_ahead(path: GlobalPath, index: int, distance: float) -> float:
    """Largest path turn rate between pose `index` and arc length `distance` past it."""
    cum = path.cumulative_length
    stop = max(int(np.searchsorted(cum, cum[index] + distance, side='right')), index + 1)
    return float(np.max(path.turn_rates[index:stop]))


def pursuit_curvature(pose: Pose2D, point: Tuple[float, float]) -> float:
    """Curvature of the arc from pose through point: 2 sin(bearing) / distance."""
    dx, dy = point[0] - pose.x, point[1] - pose.y
    d = math.hypot(dx, dy)
    if d < 1e-9:
        return 0.0
    bearing = angle_diff(math.atan2(dy, dx), pose.theta)
    return 2.0 * math.sin(bearing) / d


def track(path: GlobalPath, s: TrailerState, grid: OccupancyGrid, cfg: TrackerConfig,
          p: VehicleParams, session: Optional[TrackerSession] = None,
          dt: float = 0.0) -> Tuple[VelocityCommand, TrackerStatus]:
    """
    Compute the next bicycle-frame command.

    Args:
        path: Global path being followed (non-empty)
        s: Current vehicle state
        grid: Grid used for clearance (perceived or static)
        cfg: Tracker configuration
        p: Vehicle parameters
        session: Progress and timers carried between calls; a fresh session is
            used when omitted
        dt: Time since the previous call, advances the timers

    Returns:
        (VelocityCommand, TrackerStatus)
    """
    if session is None:
        session = TrackerSession()
    pose = s.trailer_pose
    position = np.array([pose.x, pose.y])
    kmax = p.kappa_max

    closest = _closest_index(path, position, session.progress_index, cfg.local_window)
    advanced = closest > session.progress_index
    session.progress_index = max(session.progress_index, closest)

    end = path.end
    goal_distance = math.hypot(end.x - pose.x, end.y - pose.y)
    heading_error = angle_diff(end.theta, pose.theta)

    improved = goal_distance < session.best_goal_distance - cfg.progress_epsilon
    if improved or session.best_goal_distance == math.inf:
        session.best_goal_distance = goal_distance
    if advanced or improved:
        session.time_without_progress = 0.0
    else:
        session.time_without_progress += dt

    if goal_distance <= cfg.goal_tol.xy and abs(heading_error) <= cfg.goal_tol.theta:
        session.blocked_time = 0.0
        return VelocityCommand(0.0, 0.0), _status(TrackingState.GOAL_REACHED, session)

    clearance = footprint_clearance(s, grid, p)
    obstacle_factor = min(1.0, max(0.0, clearance / cfg.obstacle_slow_band))

    if goal_distance <= cfg.goal_tol.xy:
        # inside the position tolerance: creep along a tight arc toward the goal heading
        v = cfg.v_creep * obstacle_factor
        kappa = math.copysign(kmax, heading_error)
    else:
        point = lookahead_point(path, session.progress_index, cfg.lookahead)
        kappa = max(-kmax, min(kmax, pursuit_curvature(pose, point)))
        v_goal = max(cfg.v_creep, cfg.v_cruise * min(1.0, goal_distance / cfg.slow_radius))
        bend = turn_ahead(path, session.progress_index, cfg.lookahead)
        v_curve = cfg.v_cruise / (1.0 + cfg.curve_slowdown * bend)
        v = min(v_goal, v_curve, cfg.v_cruise * obstacle_factor)

    if obstacle_factor == 0.0:
        session.blocked_time += dt
    else:
        session.blocked_time = 0.0

    if session.time_without_progress > cfg.stuck_timeout:
        state = TrackingState.STUCK
    elif session.blocked_time > cfg.blocked_dwell:
        state = TrackingState.BLOCKED
    else:
        state = TrackingState.TRACKING
    logger.debug(f"track: idx={session.progress_index} v={v:.3f} kappa={kappa:.3f} "
                 f"clearance={clearance:.3f}")
    return VelocityCommand(v, v * kappa), _status(state, session)


def _status(state: TrackingState, session: TrackerSession) -> TrackerStatus:
    return TrackerStatus(state=state, progress_index=session.progress_index,
                         time_without_progress=session.time_without_progress)
