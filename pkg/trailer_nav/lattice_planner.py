"""
State-lattice global planner.

The lattice is a regular (x, y, heading) grid: lattice point (cx, cy) sits at
grid.origin + (cx, cy) * xy_resolution and heading index h stands for
2*pi*h/num_headings. Edges are motion primitives: straight segments and
constant-curvature arcs with |kappa| <= kappa_max whose end pose is snapped to
the lattice. A* with an obstacle-aware heuristic finds the cheapest chain of
primitives into the goal tolerance region.
"""

import heapq
import logging
import math
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .angles import angle_diff
from .grid_world import OccupancyGrid, collision_free, footprint_cell_offsets
from .models import (Footprint, GlobalPath, GoalTolerance, LatticeConfig, MotionPrimitive,
                     Pose2D)

logger = logging.getLogger(__name__)

PRIMSET_MAGIC = 'primset v1'
HEURISTIC_SCALE = 0.85


class PlannerError(Exception):
    """Custom exception for planning requests that cannot be served."""
    pass


class InvalidStartError(PlannerError):
    """Raised when the start pose is in collision or outside the lattice."""
    pass


class PrimitiveFormatError(Exception):
    """Custom exception for malformed primitive set files."""
    pass


# ---------------------------------------------------------------------------
# Motion primitives
# ---------------------------------------------------------------------------

def _rotate_quarter(pose: Pose2D, turns: int) -> Pose2D:
    x, y, theta = pose.x, pose.y, pose.theta
    for _ in range(turns):
        x, y = -y, x
        theta += 0.5 * math.pi
    return Pose2D(x, y, theta)


def build_primitive(cfg: LatticeConfig, heading_index: int, curvature: float,
                    arc_length: float, reverse: bool = False,
                    primitive_id: int = -1) -> Optional[MotionPrimitive]:
    """
    Build one primitive from its geometric description.

    The primitive is constructed for the equivalent first-quadrant heading and
    rotated by whole quarter turns, so every quadrant gets bit-identical
    offsets and costs.

    Args:
        cfg: Lattice configuration
        heading_index: Start heading index
        curvature: Signed curvature of the forward arc (0 for straight)
        arc_length: Arc length in meters
        reverse: Mirror the motion to drive backwards
        primitive_id: Identifier stored on the primitive

    Returns:
        The primitive, or None when its end cannot be snapped within
        snap_tolerance or it does not leave its start point
    """
    n = cfg.num_headings
    quarter = n // 4
    base_h, turns = heading_index % quarter, (heading_index % n) // quarter
    theta0 = base_h * cfg.heading_bin
    xy = cfg.xy_resolution

    steps = max(1, math.ceil(arc_length / (0.5 * xy) - 1e-9))
    s = np.linspace(0.0, arc_length, steps + 1)
    if curvature == 0.0:
        lx, ly, lth = s, np.zeros_like(s), np.zeros_like(s)
    else:
        lth = curvature * s
        lx = np.sin(lth) / curvature
        ly = (1.0 - np.cos(lth)) / curvature
    if reverse:
        lx, lth = -lx, -lth

    dh = int(round(lth[-1] / cfg.heading_bin))
    lth = lth.copy()
    lth[-1] = dh * cfg.heading_bin

    c, sn = math.cos(theta0), math.sin(theta0)
    wx = c * lx - sn * ly
    wy = sn * lx + c * ly
    dx, dy = int(round(wx[-1] / xy)), int(round(wy[-1] / xy))
    residual = math.hypot(dx * xy - wx[-1], dy * xy - wy[-1])
    if residual > cfg.snap_tolerance or (dx == 0 and dy == 0):
        return None

    poses = [Pose2D(float(a), float(b), theta0 + float(t)) for a, b, t in zip(wx, wy, lth)]
    snapped = Pose2D(dx * xy, dy * xy, theta0 + dh * cfg.heading_bin)
    if residual > 1e-12:
        poses.append(snapped)
    else:
        poses[-1] = snapped

    pts = np.array([[q.x, q.y] for q in poses])
    path_len = float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))
    w = cfg.cost_weights
    cost = w.length * path_len + w.turning * curvature * curvature * arc_length
    if reverse:
        cost *= w.reverse

    if turns:
        poses = [_rotate_quarter(q, turns) for q in poses]
        for _ in range(turns):
            dx, dy = -dy, dx

    return MotionPrimitive(
        primitive_id=primitive_id,
        start_heading_index=heading_index % n,
        end_delta=(dx, dy, dh),
        curvature=-curvature if reverse else curvature,
        arc_length=arc_length,
        sampled_poses=tuple(poses),
        cost=cost,
        path_length=path_len,
        reverse=reverse,
    )


def _candidate_shapes(cfg: LatticeConfig) -> List[Tuple[float, float]]:
    """(curvature, arc_length) pairs requested for every start heading."""
    shapes = []
    kmax = cfg.kappa_max
    for length in cfg.primitive_lengths:
        shapes.append((0.0, length))
        for kappa in (kmax, -kmax, 0.5 * kmax, -0.5 * kmax):
            bins = max(1, int(round(abs(kappa) * length / cfg.heading_bin)))
            shapes.append((kappa, bins * cfg.heading_bin / abs(kappa)))
    return shapes


@lru_cache(maxsize=32)
def generate_primitives(cfg: LatticeConfig) -> Tuple[MotionPrimitive, ...]:
    """
    Generate the primitive set of a lattice configuration.

    Each start heading gets one straight primitive per length plus arcs at
    +-kappa_max and +-kappa_max/2 whose arc length is adjusted to a whole
    number of heading bins. Reverse variants are added when allowed.
    Duplicate (heading, delta, direction) keys keep the cheaper primitive.

    Returns:
        Primitives sorted by key, with primitive_id equal to their position
    """
    directions = (False, True) if cfg.allow_reverse else (False,)
    best: Dict[Tuple, MotionPrimitive] = {}
    dropped = 0
    for h in range(cfg.num_headings):
        for kappa, arc_length in _candidate_shapes(cfg):
            for reverse in directions:
                prim = build_primitive(cfg, h, kappa, arc_length, reverse)
                if prim is None:
                    dropped += 1
                    continue
                current = best.get(prim.key)
                if current is None or prim.cost < current.cost:
                    best[prim.key] = prim

    if dropped:
        logger.warning(f"Dropped {dropped} primitives that do not snap to the lattice")
    ordered = [best[k] for k in sorted(best)]
    prims = tuple(_with_id(p, i) for i, p in enumerate(ordered))
    logger.debug(f"Generated {len(prims)} primitives for {cfg.num_headings} headings")
    return prims


def _with_id(prim: MotionPrimitive, primitive_id: int) -> MotionPrimitive:
    return MotionPrimitive(primitive_id, prim.start_heading_index, prim.end_delta, prim.curvature,
                           prim.arc_length, prim.sampled_poses, prim.cost, prim.path_length,
                           prim.reverse)


def save_primitives(prims: Sequence[MotionPrimitive], cfg: LatticeConfig) -> str:
    """Encode a primitive set as `primset v1` text."""
    lines = [PRIMSET_MAGIC, f"xy_resolution {cfg.xy_resolution!r} num_headings {cfg.num_headings}"]
    for p in prims:
        dx, dy, dh = p.end_delta
        lines.append(f"{p.start_heading_index} {p.curvature!r} {p.arc_length!r} "
                     f"{dx} {dy} {dh} {int(p.reverse)}")
    return '\n'.join(lines) + '\n'


def load_primitives(text: str, cfg: LatticeConfig) -> Tuple[MotionPrimitive, ...]:
    """
    Parse `primset v1` text, regenerating the samples of every record.

    Raises:
        PrimitiveFormatError: On a malformed file, a lattice mismatch with cfg,
            or a record whose regenerated delta differs from the stored one
    """
    lines = [ln for ln in text.split('\n') if ln != '']
    if len(lines) < 2 or lines[0] != PRIMSET_MAGIC:
        raise PrimitiveFormatError(f"Missing '{PRIMSET_MAGIC}' header line")
    header = lines[1].split()
    if len(header) != 4 or header[0] != 'xy_resolution' or header[2] != 'num_headings':
        raise PrimitiveFormatError(f"Malformed header line: {lines[1]!r}")
    try:
        xy, n = float(header[1]), int(header[3])
    except ValueError as e:
        raise PrimitiveFormatError(f"Malformed header value: {e}") from e
    if xy != cfg.xy_resolution or n != cfg.num_headings:
        raise PrimitiveFormatError(
            f"Primitive set is for xy_resolution={xy}, num_headings={n}; "
            f"configuration has {cfg.xy_resolution}, {cfg.num_headings}")

    prims = []
    for lineno, line in enumerate(lines[2:], start=3):
        fields = line.split()
        if len(fields) != 7:
            raise PrimitiveFormatError(f"Line {lineno}: expected 7 fields, found {len(fields)}")
        try:
            h, kappa, arc = int(fields[0]), float(fields[1]), float(fields[2])
            delta = (int(fields[3]), int(fields[4]), int(fields[5]))
            reverse = bool(int(fields[6]))
        except ValueError as e:
            raise PrimitiveFormatError(f"Line {lineno}: {e}") from e
        forward_kappa = -kappa if reverse else kappa
        prim = build_primitive(cfg, h, forward_kappa, arc, reverse, primitive_id=len(prims))
        if prim is None or prim.end_delta != delta:
            raise PrimitiveFormatError(f"Line {lineno}: record does not regenerate to delta {delta}")
        prims.append(prim)
    return tuple(prims)


# ---------------------------------------------------------------------------
# Lattice on a grid
# ---------------------------------------------------------------------------

class LatticeGrid:
    """
    Primitive set laid over one grid, with per-primitive blocked tables.

    blocked[i][cy, cx] is True when primitive i started at lattice point
    (cx, cy) sweeps an occupied or out-of-bounds cell at any sample after
    the first.
    """

    def __init__(self, grid: OccupancyGrid, fp: Footprint, cfg: LatticeConfig):
        ratio = cfg.xy_resolution / grid.resolution
        k = int(round(ratio))
        if k < 1 or abs(k - ratio) > 1e-9 * max(1.0, ratio):
            raise PlannerError(
                f"xy_resolution {cfg.xy_resolution} must be an integer multiple of "
                f"the grid resolution {grid.resolution}")
        self.grid = grid
        self.fp = fp
        self.cfg = cfg
        self.k = k
        self.nx = grid.width // k + 1
        self.ny = grid.height // k + 1
        self.primitives = generate_primitives(cfg)
        self.by_heading: List[List[MotionPrimitive]] = [[] for _ in range(cfg.num_headings)]
        for prim in self.primitives:
            self.by_heading[prim.start_heading_index].append(prim)
        self.max_spacing = max(
            float(np.max(np.hypot(*np.diff([[q.x, q.y] for q in p.sampled_poses], axis=0).T)))
            for p in self.primitives)
        self.blocked = self._blocked_tables()

    def _swept_offsets(self, prim: MotionPrimitive) -> np.ndarray:
        res = self.grid.resolution
        parts = []
        for q in prim.sampled_poses[1:]:
            fx, fy = q.x / res, q.y / res
            bx, by = math.floor(fx), math.floor(fy)
            offsets = footprint_cell_offsets(fx - bx, fy - by, q.theta, self.fp, res)
            parts.append(offsets + np.array([bx, by], dtype=np.int64))
        return np.unique(np.vstack(parts), axis=0)

    def _blocked_tables(self) -> List[np.ndarray]:
        grid, k, nx, ny = self.grid, self.k, self.nx, self.ny
        swept = [self._swept_offsets(p) for p in self.primitives]
        allcells = np.vstack(swept)
        umin, vmin = allcells.min(axis=0)
        umax, vmax = allcells.max(axis=0)
        pad_l = max(0, -int(umin))
        pad_b = max(0, -int(vmin))
        pad_r = max(0, (nx - 1) * k + int(umax) - (grid.width - 1))
        pad_t = max(0, (ny - 1) * k + int(vmax) - (grid.height - 1))
        padded = np.pad(grid.cells, ((pad_b, pad_t), (pad_l, pad_r)), constant_values=True)
        prefix = np.zeros((padded.shape[0], padded.shape[1] + 1), dtype=np.int32)
        prefix[:, 1:] = np.cumsum(padded, axis=1)

        xs = (nx - 1) * k + 1
        ys = (ny - 1) * k + 1
        tables = []
        for cells in swept:
            blocked = np.zeros((ny, nx), dtype=bool)
            for v, u0, u1 in _row_runs(cells):
                r0 = pad_b + v
                rows = prefix[r0:r0 + ys:k]
                hi = rows[:, pad_l + u1 + 1:pad_l + u1 + 1 + xs:k]
                lo = rows[:, pad_l + u0:pad_l + u0 + xs:k]
                blocked |= (hi - lo) > 0
            blocked.setflags(write=False)
            tables.append(blocked)
        return tables

    def point(self, cx: int, cy: int) -> Tuple[float, float]:
        xy = self.cfg.xy_resolution
        return (self.grid.origin.x + cx * xy, self.grid.origin.y + cy * xy)

    def snap(self, pose: Pose2D) -> Tuple[int, int, int]:
        xy = self.cfg.xy_resolution
        return (int(round((pose.x - self.grid.origin.x) / xy)),
                int(round((pose.y - self.grid.origin.y) / xy)),
                self.cfg.heading_index(pose.theta))

    def in_range(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.nx and 0 <= cy < self.ny

    def lattice_pose(self, cx: int, cy: int, h: int) -> Pose2D:
        x, y = self.point(cx, cy)
        return Pose2D(x, y, h * self.cfg.heading_bin)


def _row_runs(cells: np.ndarray) -> List[Tuple[int, int, int]]:
    """Group (u, v) cells into maximal horizontal (v, u_start, u_end) runs."""
    ordered = cells[np.lexsort((cells[:, 0], cells[:, 1]))]
    runs: List[List[int]] = []
    for u, v in ordered.tolist():
        if runs and runs[-1][0] == v and runs[-1][2] == u - 1:
            runs[-1][2] = u
        else:
            runs.append([v, u, u])
    return [tuple(r) for r in runs]


@lru_cache(maxsize=8)
def lattice_for(grid: OccupancyGrid, fp: Footprint, cfg: LatticeConfig) -> LatticeGrid:
    """Cached LatticeGrid per (grid object, footprint, configuration)."""
    return LatticeGrid(grid, fp, cfg)


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

def _distance_field(lat: LatticeGrid, goal: Pose2D, in_tol: np.ndarray,
                    fp: Footprint) -> np.ndarray:
    """
    Lower bound (meters) on the traveled distance plus goal offset from each
    lattice point, via an 8-connected Dijkstra over lattice points that can
    hold the footprint's inscribed disk.
    """
    nx, ny, xy = lat.nx, lat.ny, lat.cfg.xy_resolution
    cx, cy = np.meshgrid(np.arange(nx), np.arange(ny))
    px = lat.grid.origin.x + cx * xy
    py = lat.grid.origin.y + cy * xy
    index = lat.grid.obstacle_index
    threshold = fp.inscribed_radius() - 0.5 * lat.max_spacing - xy / math.sqrt(2.0)
    if index.tree is not None and threshold > 0:
        clearance, _ = index.tree.query(np.column_stack([px.ravel(), py.ravel()]))
        free = (clearance >= threshold).reshape(ny, nx)
    else:
        free = np.ones((ny, nx), dtype=bool)

    ids = np.arange(nx * ny).reshape(ny, nx)
    rows, cols, weights = [], [], []
    for ddx, ddy in ((1, 0), (0, 1), (1, 1), (1, -1)):
        ys0, ys1 = max(0, -ddy), ny - max(0, ddy)
        a = ids[ys0:ys1, 0:nx - ddx]
        b = ids[ys0 + ddy:ys1 + ddy, ddx:nx]
        ok = free[ys0:ys1, 0:nx - ddx] & free[ys0 + ddy:ys1 + ddy, ddx:nx]
        w = xy * math.hypot(ddx, ddy)
        rows += [a[ok], b[ok]]
        cols += [b[ok], a[ok]]
        weights += [np.full(int(ok.sum()) * 2, w)]

    source = nx * ny
    seeds = in_tol & free
    seed_ids = ids[seeds]
    offset = 1.0
    seed_dist = np.hypot(px[seeds] - goal.x, py[seeds] - goal.y) + offset
    rows.append(np.full(len(seed_ids), source))
    cols.append(seed_ids)
    weights.append(seed_dist)

    graph = coo_matrix((np.concatenate(weights),
                        (np.concatenate(rows), np.concatenate(cols))),
                       shape=(source + 1, source + 1)).tocsr()
    dist = dijkstra(graph, directed=True, indices=source)
    return (dist[:source] - offset).reshape(ny, nx)


def plan(grid: OccupancyGrid, start: Pose2D, goal: Pose2D, fp: Footprint,
         cfg: LatticeConfig, goal_tol: GoalTolerance) -> Optional[GlobalPath]:
    """
    Find the cheapest lattice path from start into the goal tolerance region.

    The footprint is inflated by cfg.footprint_margin. The start is snapped to
    the nearest lattice state; the path begins at that lattice pose.

    Args:
        grid: Occupancy grid
        start: Start pose of the planning frame
        goal: Goal pose
        fp: Planning footprint before inflation
        cfg: Lattice configuration
        goal_tol: Translational and rotational goal tolerance

    Returns:
        GlobalPath, or None when no lattice path reaches the goal region

    Raises:
        PlannerError: If the goal lies outside the grid
        InvalidStartError: If the snapped start is outside the lattice or in
            collision
    """
    gx_m, gy_m = grid.size_m
    if not (0 <= goal.x - grid.origin.x < gx_m and 0 <= goal.y - grid.origin.y < gy_m):
        raise PlannerError(f"Goal ({goal.x:.3f}, {goal.y:.3f}) lies outside the grid")

    planning_fp = fp.inflated(cfg.footprint_margin)
    lat = lattice_for(grid, planning_fp, cfg)
    nx, ny, n = lat.nx, lat.ny, cfg.num_headings
    layer = nx * ny

    scx, scy, sh = lat.snap(start)
    if not lat.in_range(scx, scy):
        raise InvalidStartError(f"Start ({start.x:.3f}, {start.y:.3f}) is outside the lattice")
    start_pose = lat.lattice_pose(scx, scy, sh)
    if not collision_free(grid, start_pose, planning_fp) or _out_of_bounds(grid, start_pose, planning_fp):
        raise InvalidStartError(f"Start ({start.x:.3f}, {start.y:.3f}, {start.theta:.3f}) is in collision")

    xy = cfg.xy_resolution
    w = cfg.cost_weights
    cxs, cys = np.meshgrid(np.arange(nx), np.arange(ny))
    offset = np.hypot(grid.origin.x + cxs * xy - goal.x, grid.origin.y + cys * xy - goal.y)
    in_tol = offset <= goal_tol.xy
    heading_err = np.array([abs(angle_diff(cfg.heading_angle(h), goal.theta)) for h in range(n)])
    heading_ok = heading_err <= goal_tol.theta
    if not in_tol.any() or not heading_ok.any():
        logger.info("Goal tolerance region contains no lattice state")
        return None

    lower = _distance_field(lat, goal, in_tol, planning_fp)
    htable = np.maximum(w.length * offset, w.length * (HEURISTIC_SCALE * lower - 2.0 * xy))
    htable = np.where(np.isfinite(lower), htable, np.inf)
    hflat = htable.ravel()
    terminal = (w.goal_offset * offset).ravel()
    tol_flat = in_tol.ravel()

    goal_node = n * layer
    g = np.full(n * layer, np.inf)
    parent = np.full(n * layer, -1, dtype=np.int64)
    parent_prim = np.full(n * layer, -1, dtype=np.int64)

    start_idx = sh * layer + scy * nx + scx
    if not np.isfinite(hflat[start_idx - sh * layer]):
        logger.info("Goal region is unreachable from the start")
        return None
    g[start_idx] = 0.0
    heap = [(hflat[scy * nx + scx], hflat[scy * nx + scx], start_idx, 0.0)]
    best_goal = math.inf
    goal_parent = -1
    expansions = 0

    edges = [[(p.end_delta[0], p.end_delta[1], (h + p.end_delta[2]) % n, p.cost,
               lat.blocked[p.primitive_id], p.primitive_id) for p in lat.by_heading[h]]
             for h in range(n)]

    while heap:
        f, _, idx, gv = heapq.heappop(heap)
        if idx == goal_node:
            break
        if gv > g[idx] or f >= best_goal:
            continue
        expansions += 1
        h, rem = divmod(idx, layer)
        cy, cx = divmod(rem, nx)

        if tol_flat[rem] and heading_ok[h]:
            total = gv + terminal[rem] + w.goal_heading * heading_err[h]
            if total < best_goal:
                best_goal = total
                goal_parent = idx
                heapq.heappush(heap, (total, 0.0, goal_node, total))

        for dx, dy, eh, cost, blocked, pid in edges[h]:
            ex, ey = cx + dx, cy + dy
            if ex < 0 or ey < 0 or ex >= nx or ey >= ny or blocked[cy, cx]:
                continue
            erem = ey * nx + ex
            hv = hflat[erem]
            if hv == math.inf:
                continue
            nidx = eh * layer + erem
            g2 = gv + cost
            if g2 < g[nidx]:
                g[nidx] = g2
                parent[nidx] = idx
                parent_prim[nidx] = pid
                heapq.heappush(heap, (g2 + hv, hv, nidx, g2))

    logger.debug(f"A* expanded {expansions} states")
    if goal_parent < 0:
        logger.info(f"No path from ({start.x:.2f}, {start.y:.2f}) to ({goal.x:.2f}, {goal.y:.2f})")
        return None

    chain = []
    idx = goal_parent
    while idx != start_idx:
        chain.append((parent[idx], parent_prim[idx]))
        idx = parent[idx]
    chain.reverse()

    poses = [start_pose]
    prim_ids = []
    for from_idx, pid in chain:
        rem = from_idx % layer
        bx, by = lat.point(rem % nx, rem // nx)
        prim = lat.primitives[pid]
        poses.extend(Pose2D(bx + q.x, by + q.y, q.theta) for q in prim.sampled_poses[1:])
        prim_ids.append(int(pid))

    logger.info(f"Path found: {len(prim_ids)} primitives, cost {best_goal:.3f}")
    return GlobalPath(poses=tuple(poses), total_cost=float(best_goal), primitive_ids=tuple(prim_ids))


def _out_of_bounds(grid: OccupancyGrid, pose: Pose2D, fp: Footprint) -> bool:
    fx = (pose.x - grid.origin.x) / grid.resolution
    fy = (pose.y - grid.origin.y) / grid.resolution
    bx, by = math.floor(fx), math.floor(fy)
    cells = footprint_cell_offsets(fx - bx, fy - by, pose.theta, fp, grid.resolution) + [bx, by]
    return bool(((cells[:, 0] < 0) | (cells[:, 0] >= grid.width)
                 | (cells[:, 1] < 0) | (cells[:, 1] >= grid.height)).any())


# ---------------------------------------------------------------------------
# Path helpers
# ---------------------------------------------------------------------------

def replan_needed(path: GlobalPath, grid: OccupancyGrid, fp: Footprint, from_index: int = 0) -> bool:
    """True iff any pose of the path from from_index on collides on grid."""
    return any(not collision_free(grid, q, fp) for q in path.poses[from_index:])


def path_length(path: GlobalPath) -> float:
    return path.length


def path_curvatures(path: GlobalPath) -> np.ndarray:
    """
    Discrete curvature between consecutive poses, 2*sin(|dtheta|/2)/chord.

    Segments shorter than 1e-12 m are skipped.
    """
    values = []
    for a, b in zip(path.poses, path.poses[1:]):
        chord = math.hypot(b.x - a.x, b.y - a.y)
        if chord <= 1e-12:
            continue
        values.append(2.0 * math.sin(0.5 * abs(angle_diff(b.theta, a.theta))) / chord)
    return np.array(values)
