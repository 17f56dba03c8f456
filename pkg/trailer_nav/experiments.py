"""
Evaluation environments, batch runs and metrics.

Two layouts are generated on an occupancy grid:

* loop_course: a square ring corridor around a central wall block, with
  targets P0..P3 in the middle of each side, oriented for counterclockwise
  travel. Every run starts at P0 and visits P1, P2, P3, P0.
* single_corner: a loop whose bottom and right legs have the critical width
  while the top and left return legs are wide. Runs start at P1 and alternate
  between P0 and P1.

Runs of a batch differ only by a seeded start-pose jitter, so a batch is
reproducible for fixed seeds whatever the number of worker processes.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .grid_world import OccupancyGrid
from .models import (BatchMetrics, MAX_CORRIDOR_WIDTH, MIN_CORRIDOR_WIDTH, AbortReason,
                     Pose2D, Scenario, TrailerState, WidthMetrics)
from .results_writer import ResultsWriter
from .scenario_loader import scenario_to_dict
from .simulator import SimWorld, run_sequence, trajectory_frame

logger = logging.getLogger(__name__)

WALL_THICKNESS = 0.2
CORNER_INTERIOR = 8.0
CORNER_RETURN_WIDTH = 2.5
SKIPPED = 'skipped'

RESULT_COLUMNS = ['width', 'run', 'target_index', 'target_x', 'target_y', 'target_theta',
                  'reached', 'duration', 'abort_reason', 'replans']
ABORT_COLUMNS = [r.value for r in AbortReason if r is not AbortReason.NONE] + [SKIPPED]


class LayoutError(ValueError):
    """Raised for corridor widths outside the supported range."""
    pass


def _check_width(width: float) -> None:
    if not MIN_CORRIDOR_WIDTH <= width <= MAX_CORRIDOR_WIDTH:
        raise LayoutError(f"corridor width {width} m outside the valid range "
                          f"[{MIN_CORRIDOR_WIDTH}, {MAX_CORRIDOR_WIDTH}] m")


def _cells(length: float, resolution: float) -> int:
    return int(round(length / resolution))


def make_loop_course(width: float, resolution: float = 0.05,
                     corridor_length: float = 10.0) -> Tuple[OccupancyGrid, List[Pose2D]]:
    """
    Square ring corridor.

    The outer wall encloses a corridor_length x corridor_length interior; the
    central block leaves `width` of free space on all four sides.

    Args:
        width: Corridor width, wall face to wall face
        resolution: Grid resolution in meters per cell
        corridor_length: Interior side length

    Returns:
        (grid, [P0, P1, P2, P3]) with P0 on the bottom side heading +x and the
        others following counterclockwise

    Raises:
        LayoutError: If width is outside [1.0, 3.0] m
    """
    _check_width(width)
    wall = _cells(WALL_THICKNESS, resolution)
    interior = _cells(corridor_length, resolution)
    corridor = _cells(width, resolution)
    if 2 * corridor >= interior:
        raise LayoutError(f"corridor width {width} m leaves no central block")
    size = interior + 2 * wall

    cells = np.zeros((size, size), dtype=bool)
    cells[:wall, :] = True
    cells[-wall:, :] = True
    cells[:, :wall] = True
    cells[:, -wall:] = True
    lo, hi = wall + corridor, wall + interior - corridor
    cells[lo:hi, lo:hi] = True
    grid = OccupancyGrid(resolution, Pose2D(0.0, 0.0, 0.0), cells)

    w = corridor * resolution
    inner_lo = wall * resolution
    inner_hi = (wall + interior) * resolution
    mid = 0.5 * (inner_lo + inner_hi)
    waypoints = [
        Pose2D(mid, inner_lo + 0.5 * w, 0.0),
        Pose2D(inner_hi - 0.5 * w, mid, 0.5 * math.pi),
        Pose2D(mid, inner_hi - 0.5 * w, math.pi),
        Pose2D(inner_lo + 0.5 * w, mid, -0.5 * math.pi),
    ]
    return grid, waypoints


def make_single_corner(width: float, resolution: float = 0.05) -> Tuple[OccupancyGrid, List[Pose2D]]:
    """
    Course with one critical corner.

    The bottom and right legs are `width` wide and meet in the critical
    corner; the top and left return legs are 2.5 m wide.

    Returns:
        (grid, [P0, P1]): P0 centered in the bottom leg heading +x, P1 centered
        in the right leg heading +y

    Raises:
        LayoutError: If width is outside [1.0, 3.0] m
    """
    _check_width(width)
    wall = _cells(WALL_THICKNESS, resolution)
    interior = _cells(CORNER_INTERIOR, resolution)
    corridor = _cells(width, resolution)
    wide = _cells(CORNER_RETURN_WIDTH, resolution)
    size = interior + 2 * wall

    cells = np.zeros((size, size), dtype=bool)
    cells[:wall, :] = True
    cells[-wall:, :] = True
    cells[:, :wall] = True
    cells[:, -wall:] = True
    cells[wall + corridor:wall + interior - wide, wall + wide:wall + interior - corridor] = True
    grid = OccupancyGrid(resolution, Pose2D(0.0, 0.0, 0.0), cells)

    w = corridor * resolution
    inner_lo = wall * resolution
    inner_hi = (wall + interior) * resolution
    block_lo = (wall + wide) * resolution
    block_hi = (wall + interior - corridor) * resolution
    along_bottom = 0.5 * (block_lo + block_hi)
    along_right = 0.5 * (inner_lo + w + (wall + interior - wide) * resolution)
    waypoints = [
        Pose2D(along_bottom, inner_lo + 0.5 * w, 0.0),
        Pose2D(inner_hi - 0.5 * w, along_right, 0.5 * math.pi),
    ]
    return grid, waypoints


@lru_cache(maxsize=16)
def _layout(layout: str, width: float, resolution: float,
            corridor_length: float) -> Tuple[OccupancyGrid, Tuple[Pose2D, ...]]:
    if layout == 'loop_course':
        grid, waypoints = make_loop_course(width, resolution, corridor_length)
    else:
        grid, waypoints = make_single_corner(width, resolution)
    return grid, tuple(waypoints)


def target_sequence(sc: Scenario, waypoints: Tuple[Pose2D, ...]) -> Tuple[Pose2D, List[Pose2D]]:
    """Start pose and ordered targets of one run."""
    if sc.layout == 'loop_course':
        p0, p1, p2, p3 = waypoints
        return p0, [p1, p2, p3, p0]
    p0, p1 = waypoints
    return p1, [p0 if k % 2 == 0 else p1 for k in range(sc.targets_per_run)]


def jittered_start(pose: Pose2D, seed: int, jitter_xy: float, jitter_theta: float) -> TrailerState:
    """Straight-hitch start state with a seeded uniform pose perturbation."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    dx, dy = rng.uniform(-jitter_xy, jitter_xy, size=2)
    dth = rng.uniform(-jitter_theta, jitter_theta)
    return TrailerState(Pose2D(pose.x + float(dx), pose.y + float(dy), pose.theta + float(dth)), 0.0)


# ---------------------------------------------------------------------------
# Batch execution
# ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    """Results of one run: result rows plus one trajectory table per attempted target."""
    width: float
    run: int
    rows: List[Dict] = field(default_factory=list)
    trajectories: List[pd.DataFrame] = field(default_factory=list)


@dataclass
class BatchResult:
    metrics: BatchMetrics
    results: pd.DataFrame
    outcomes: List[RunOutcome] = field(default_factory=list)


def execute_run(sc: Scenario, width: float, run: int) -> RunOutcome:
    """
    Execute one run of a scenario at one corridor width.

    Module-level so it can be shipped to worker processes.
    """
    grid, waypoints = _layout(sc.layout, width, sc.grid_resolution, sc.corridor_length)
    start, targets = target_sequence(sc, waypoints)
    seed = sc.seed_for_run(run)
    s0 = jittered_start(start, seed, sc.start_jitter.xy, sc.start_jitter.theta)
    world = SimWorld(static_grid=grid, dt=sc.dt, rng_seed=seed)
    results = run_sequence(world, s0, targets, sc.vehicle, sc.lattice, sc.tracker,
                           sc.tolerances, sc.timeout)

    outcome = RunOutcome(width=width, run=run)
    for k, target in enumerate(targets):
        if k < len(results):
            r = results[k]
            outcome.rows.append(_result_row(width, run, k, target, r.reached, r.duration,
                                            r.abort_reason.value, r.replans))
            outcome.trajectories.append(trajectory_frame(r, sc.vehicle))
        else:
            outcome.rows.append(_result_row(width, run, k, target, False, 0.0, SKIPPED, 0))
    reached = sum(1 for row in outcome.rows if row['reached'])
    logger.info(f"width {width:.2f} run {run:03d}: {reached}/{len(targets)} targets reached")
    return outcome


def _result_row(width, run, k, target, reached, duration, reason, replans) -> Dict:
    return {'width': width, 'run': run, 'target_index': k, 'target_x': target.x,
            'target_y': target.y, 'target_theta': target.theta, 'reached': bool(reached),
            'duration': float(duration), 'abort_reason': reason, 'replans': int(replans)}


def _execute_task(task: Tuple[Scenario, float, int]) -> RunOutcome:
    return execute_run(*task)


def metrics_from_results(results: pd.DataFrame) -> BatchMetrics:
    """
    Aggregate per-target rows into per-width metrics.

    mean_time_per_target averages the durations of reached targets (NaN when
    none was reached); aborts_by_reason counts every non-reached outcome,
    skipped targets included.
    """
    metrics = BatchMetrics()
    for width in sorted(results['width'].unique()):
        rows = results[results['width'] == width]
        attempted = int(len(rows))
        reached_rows = rows[rows['reached'].astype(bool)]
        reached = int(len(reached_rows))
        mean_time = float(reached_rows['duration'].mean()) if reached else float('nan')
        reasons = rows.loc[~rows['reached'].astype(bool), 'abort_reason'].value_counts()
        metrics.per_width[float(width)] = WidthMetrics(
            targets_attempted=attempted,
            targets_reached=reached,
            success_rate=reached / attempted if attempted else 0.0,
            mean_time_per_target=mean_time,
            aborts_by_reason={str(k): int(v) for k, v in sorted(reasons.items())},
        )
    return metrics


def metrics_frame(metrics: BatchMetrics) -> pd.DataFrame:
    """One row per width, ascending, with a fixed set of abort columns."""
    rows = []
    for width in metrics.widths():
        m = metrics.per_width[width]
        row = {'width': width, 'targets_attempted': m.targets_attempted,
               'targets_reached': m.targets_reached, 'success_rate': m.success_rate,
               'mean_time_per_target': m.mean_time_per_target}
        for reason in ABORT_COLUMNS:
            row[f'aborts_{reason}'] = m.aborts_by_reason.get(reason, 0)
        rows.append(row)
    columns = ['width', 'targets_attempted', 'targets_reached', 'success_rate',
               'mean_time_per_target'] + [f'aborts_{r}' for r in ABORT_COLUMNS]
    return pd.DataFrame(rows, columns=columns)


def run_label(width: float) -> str:
    return f"{width:.2f}"


class BatchRunner:
    """
    Runs every (width, run) pair of a scenario and persists the results.

    Results are aggregated in (width, run) order, independent of the order in
    which parallel workers finish.
    """

    def __init__(self, scenario: Scenario, logger: Optional[logging.Logger] = None):
        self.scenario = scenario
        self.logger = logger or logging.getLogger(__name__)

    def tasks(self) -> List[Tuple[Scenario, float, int]]:
        return [(self.scenario, width, run)
                for width in sorted(self.scenario.corridor_widths)
                for run in range(self.scenario.runs)]

    def run(self, parallel: int = 1, out_dir: Optional[str] = None) -> BatchResult:
        """
        Execute the batch.

        Args:
            parallel: Number of worker processes (1 runs in-process)
            out_dir: Results directory; nothing is written when None

        Returns:
            BatchResult with metrics and the per-target results table
        """
        if parallel < 1:
            raise ValueError("parallel must be >= 1")
        tasks = self.tasks()
        self.logger.info(f"Running {len(tasks)} runs on {parallel} worker(s)")
        writer = ResultsWriter(out_dir, self.logger) if out_dir else None

        outcomes: List[RunOutcome] = []
        if parallel == 1:
            completed = map(_execute_task, tasks)
            for outcome in completed:
                self._persist_run(writer, outcome)
                outcomes.append(outcome)
        else:
            with ProcessPoolExecutor(max_workers=parallel) as pool:
                for outcome in pool.map(_execute_task, tasks):
                    self._persist_run(writer, outcome)
                    outcomes.append(outcome)

        outcomes.sort(key=lambda o: (o.width, o.run))
        results = pd.DataFrame([row for o in outcomes for row in o.rows], columns=RESULT_COLUMNS)
        metrics = metrics_from_results(results)
        if writer is not None:
            frame = metrics_frame(metrics)
            writer.write_frame('metrics.csv', frame)
            writer.write_frame('results.csv', results)
            writer.write_workbook('metrics.xlsx', {'metrics': frame, 'results': results})
            writer.write_json('scenario.lock', scenario_to_dict(self.scenario))
        for width in metrics.widths():
            m = metrics.per_width[width]
            self.logger.info(f"width {width:.2f}: {m.targets_reached}/{m.targets_attempted} reached")
        return BatchResult(metrics=metrics, results=results, outcomes=outcomes)

    def _persist_run(self, writer: Optional[ResultsWriter], outcome: RunOutcome) -> None:
        if writer is None:
            return
        base = os.path.join('runs', run_label(outcome.width), f"{outcome.run:03d}")
        for k, frame in enumerate(outcome.trajectories):
            writer.write_frame(os.path.join(base, f"{k:02d}.csv"), frame)
        outcome.trajectories = []


def run_batch(sc: Scenario, out_dir: Optional[str] = None, parallel: int = 1,
              logger: Optional[logging.Logger] = None) -> BatchResult:
    """Run a scenario batch; see BatchRunner.run."""
    return BatchRunner(sc, logger).run(parallel=parallel, out_dir=out_dir)
