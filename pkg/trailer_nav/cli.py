#!/usr/bin/env python3
"""
trailernav CLI - plan, simulate and benchmark tractor-trailer navigation.

Exit codes: 0 success, 1 domain failure (no path, target missed),
2 usage error (bad flags, invalid inputs). Inputs are validated before any
output file is written.
"""

import argparse
import logging
import math
import os
import sys
from typing import List, Optional

import pandas as pd

from . import __version__
from .experiments import LayoutError, make_loop_course, make_single_corner, run_batch
from .grid_world import GridFormatError, OccupancyGrid, load_grid, save_grid
from .lattice_planner import InvalidStartError, PlannerError, plan
from .map_cover import build_cover, save_cover
from .models import GoalTolerance, LatticeConfig, Pose2D, TrackerConfig, TrailerState, VehicleParams
from .results_writer import ResultsWriter, ResultsWriterError
from .scenario_loader import ScenarioLoader, ScenarioLoaderError
from .simulator import SimWorld, run_sequence, trajectory_frame

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

THREADS_ENV = 'TRAILERNAV_THREADS'
LAYOUTS = {'loop': make_loop_course, 'corner': make_single_corner}


class UsageError(Exception):
    """Invalid input detected before any work is done."""
    pass


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = create_argument_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, format='%(levelname)s: %(message)s')
    elif args.quiet:
        logging.basicConfig(level=logging.ERROR, format='%(levelname)s: %(message)s')
    else:
        logging.basicConfig(level=logging.INFO, format='%(message)s')

    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        return args.handler(args)
    except UsageError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_USAGE
    except ResultsWriterError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_FAILURE
    except KeyboardInterrupt:
        print("\n[CANCELLED] Operation cancelled by user", file=sys.stderr)
        return EXIT_FAILURE


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser."""
    parser = argparse.ArgumentParser(
        prog='trailernav',
        description="Tractor-trailer navigation: maps, planning, simulation and experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate the ring corridor at 1.6 m width
  trailernav gen-map --layout loop --width 1.6 --out loop_160.map

  # Plan a path for the trailer axle
  trailernav plan --map loop_160.map --start 5.2,1.0,0 --goal 9.4,5.2,1.5708 --out path.csv

  # Drive through a sequence of targets
  trailernav simulate --map loop_160.map --start 5.2,1.0,0 --goal 9.4,5.2,1.5708 --out sim/

  # Run a batch experiment on 4 worker processes
  trailernav experiment --scenario sweep.json --out results/ --parallel 4

  # Decompose the free space into whitelist rectangles
  trailernav cover --map loop_160.map --out loop_160.cover
        """
    )
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='Enable verbose output with detailed processing information')
    parser.add_argument('-q', '--quiet', action='store_true',
                        help='Quiet mode - only show errors')
    sub = parser.add_subparsers(dest='command')

    p = sub.add_parser('gen-map', help='Generate an experiment map and its waypoints')
    p.add_argument('--layout', choices=sorted(LAYOUTS), required=True)
    p.add_argument('--width', type=float, required=True, help='Corridor width in meters')
    p.add_argument('--resolution', type=float, default=0.05, help='Meters per cell (default: 0.05)')
    p.add_argument('--out', required=True, help='Map file to write')
    p.set_defaults(handler=cmd_gen_map)

    p = sub.add_parser('plan', help='Plan a global path on a map')
    p.add_argument('--map', required=True)
    p.add_argument('--start', type=parse_pose, required=True, help='x,y,theta')
    p.add_argument('--goal', type=parse_pose, required=True, help='x,y,theta')
    p.add_argument('--tol-xy', type=float, default=0.5)
    p.add_argument('--tol-theta', type=float, default=0.2)
    p.add_argument('--out', help='Path CSV to write')
    p.set_defaults(handler=cmd_plan)

    p = sub.add_parser('simulate', help='Simulate driving to one or more targets')
    p.add_argument('--map', required=True)
    p.add_argument('--start', type=parse_pose, required=True, help='x,y,theta of the trailer')
    p.add_argument('--goal', type=parse_pose, action='append', required=True,
                   help='x,y,theta; repeat for a sequence')
    p.add_argument('--timeout', type=float, default=120.0, help='Seconds per target')
    p.add_argument('--dt', type=float, default=0.02)
    p.add_argument('--out', help='Directory for trajectory CSVs')
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser('experiment', help='Run a batch experiment from a scenario file')
    p.add_argument('--scenario', required=True)
    p.add_argument('--out', required=True, help='Results directory')
    p.add_argument('--parallel', type=int, default=None,
                   help=f'Worker processes (default: ${THREADS_ENV} or 1)')
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser('cover', help='Build the whitelist rectangle cover of a map')
    p.add_argument('--map', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_cover)

    p = sub.add_parser('version', help='Print the version')
    p.set_defaults(handler=cmd_version)
    return parser


def parse_pose(text: str) -> Pose2D:
    """argparse type for 'x,y,theta'."""
    parts = text.split(',')
    try:
        values = [float(v) for v in parts]
    except ValueError:
        values = []
    if len(values) != 3 or not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"expected x,y,theta, got {text!r}")
    return Pose2D(*values)


def read_map(path: str) -> OccupancyGrid:
    if not os.path.isfile(path):
        raise UsageError(f"Map file not found: {path}")
    try:
        with open(path, 'r', encoding='ascii', newline='') as file:
            return load_grid(file.read())
    except (GridFormatError, UnicodeDecodeError) as e:
        raise UsageError(f"Invalid map file {path}: {e}")


def cmd_gen_map(args) -> int:
    try:
        grid, waypoints = LAYOUTS[args.layout](args.width, args.resolution)
    except LayoutError as e:
        raise UsageError(str(e))
    except ValueError as e:
        raise UsageError(f"Invalid map parameters: {e}")

    writer = ResultsWriter()
    writer.write_text(args.out, save_grid(grid))
    frame = pd.DataFrame([(f"P{i}", q.x, q.y, q.theta) for i, q in enumerate(waypoints)],
                         columns=['name', 'x', 'y', 'theta'])
    writer.write_frame(args.out + '.waypoints.csv', frame)
    print(f"[OK] Map written: {args.out} ({grid.width}x{grid.height} cells, "
          f"{len(waypoints)} waypoints)")
    return EXIT_OK


def cmd_plan(args) -> int:
    grid = read_map(args.map)
    try:
        tol = GoalTolerance(args.tol_xy, args.tol_theta)
    except ValueError as e:
        raise UsageError(str(e))
    vehicle = VehicleParams()
    cfg = LatticeConfig.for_vehicle(vehicle)
    try:
        path = plan(grid, args.start, args.goal, vehicle.planning_footprint, cfg, tol)
    except InvalidStartError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_FAILURE
    except PlannerError as e:
        raise UsageError(str(e))
    if path is None:
        print("[ERROR] No path to the goal region", file=sys.stderr)
        return EXIT_FAILURE

    print(f"cost {path.total_cost!r}")
    print(f"length {path.length!r}")
    if args.out:
        frame = pd.DataFrame([q.as_tuple() for q in path.poses], columns=['x', 'y', 'theta'])
        ResultsWriter().write_frame(args.out, frame)
        print(f"[OK] Path written: {args.out} ({len(path.poses)} poses)")
    return EXIT_OK


def cmd_simulate(args) -> int:
    grid = read_map(args.map)
    if not args.timeout > 0:
        raise UsageError("--timeout must be positive")
    try:
        world = SimWorld(static_grid=grid, dt=args.dt)
    except ValueError as e:
        raise UsageError(str(e))
    vehicle = VehicleParams()
    results = run_sequence(world, TrailerState(args.start, 0.0), args.goal, vehicle,
                           LatticeConfig.for_vehicle(vehicle), TrackerConfig(),
                           GoalTolerance(), args.timeout)
    writer = ResultsWriter(args.out) if args.out else None
    for k, r in enumerate(results):
        status = 'reached' if r.reached else f"failed ({r.abort_reason.value})"
        print(f"target {k}: ({r.target.x:.3f}, {r.target.y:.3f}, {r.target.theta:.3f}) "
              f"{status} in {r.duration:.2f} s")
        if writer is not None:
            writer.write_frame(f"{k:02d}.csv", trajectory_frame(r, vehicle))
    all_reached = len(results) == len(args.goal) and all(r.reached for r in results)
    return EXIT_OK if all_reached else EXIT_FAILURE


def _parallelism(value: Optional[int]) -> int:
    if value is None:
        raw = os.environ.get(THREADS_ENV)
        if raw is None or raw == '':
            return 1
        try:
            value = int(raw)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if value < 1:
        raise UsageError("--parallel must be a positive integer")
    return value


def cmd_experiment(args) -> int:
    parallel = _parallelism(args.parallel)
    try:
        scenario = ScenarioLoader().load_scenario(args.scenario)
    except ScenarioLoaderError as e:
        raise UsageError(str(e))
    result = run_batch(scenario, out_dir=args.out, parallel=parallel)
    for width in result.metrics.widths():
        m = result.metrics.per_width[width]
        print(f"width {width:.2f}: {m.targets_reached}/{m.targets_attempted} reached, "
              f"mean time {m.mean_time_per_target:.2f} s")
    print(f"[OK] Results written to {args.out}")
    return EXIT_OK


def cmd_cover(args) -> int:
    grid = read_map(args.map)
    cover = build_cover(grid)
    ResultsWriter().write_text(args.out, save_cover(cover))
    free = int((~grid.cells).sum())
    print(f"[OK] Cover written: {args.out} ({len(cover)} rectangles over {free} free cells)")
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"trailernav {__version__}")
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
