"""
Data models for the tractor-trailer navigation stack.

This module defines the value types shared by the planner, tracker, hitch
controller, simulator and experiment runner. All of them are dataclasses that
validate themselves in __post_init__ and raise ValueError on bad input.
"""

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .angles import normalize_angle


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; theta is stored normalized to [-pi, pi)."""
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Pose position must be finite, got ({self.x}, {self.y})")
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        object.__setattr__(self, 'theta', normalize_angle(float(self.theta)))

    def distance_to(self, other: 'Pose2D') -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.theta)


# ---------------------------------------------------------------------------
# Footprints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Circle:
    """A footprint circle, offset along the x axis of the footprint frame."""
    offset_x: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("Circle radius must be strictly positive")

    def contains_local(self, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
        return (lx - self.offset_x) ** 2 + ly ** 2 <= self.radius ** 2

    def local_bounds(self) -> Tuple[float, float, float, float]:
        return (self.offset_x - self.radius, self.offset_x + self.radius, -self.radius, self.radius)

    def circumradius(self) -> float:
        return abs(self.offset_x) + self.radius

    def inscribed_radius(self) -> float:
        return max(self.radius - abs(self.offset_x), 0.0)

    def inflated(self, margin: float) -> 'Circle':
        return Circle(self.offset_x, self.radius + margin)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'circle', 'offset_x': self.offset_x, 'radius': self.radius}


@dataclass(frozen=True)
class RectangleFootprint:
    """
    Axis-aligned rectangle in the footprint frame.

    The rectangle is centered at (offset_x, 0) and spans length along x and
    width along y.
    """
    length: float
    width: float
    offset_x: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError("Rectangle footprint length and width must be strictly positive")

    def contains_local(self, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
        """Closed membership test for points given in the footprint frame."""
        return (np.abs(lx - self.offset_x) <= 0.5 * self.length) & (np.abs(ly) <= 0.5 * self.width)

    def local_bounds(self) -> Tuple[float, float, float, float]:
        half_l = 0.5 * self.length
        half_w = 0.5 * self.width
        return (self.offset_x - half_l, self.offset_x + half_l, -half_w, half_w)

    def circumradius(self) -> float:
        half_l = 0.5 * self.length
        return math.hypot(abs(self.offset_x) + half_l, 0.5 * self.width)

    def inscribed_radius(self) -> float:
        half_l = 0.5 * self.length
        r = min(0.5 * self.width, half_l + self.offset_x, half_l - self.offset_x)
        return max(r, 0.0)

    def inflated(self, margin: float) -> 'RectangleFootprint':
        return RectangleFootprint(self.length + 2.0 * margin, self.width + 2.0 * margin, self.offset_x)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'rectangle', 'length': self.length, 'width': self.width,
                'offset_x': self.offset_x}


@dataclass(frozen=True)
class TwoCirclesFootprint:
    """Two circles, each defined by radius and offset from the base frame."""
    circle_1: Circle
    circle_2: Circle

    @property
    def circles(self) -> Tuple[Circle, Circle]:
        return (self.circle_1, self.circle_2)

    def contains_local(self, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
        inside = np.zeros(np.shape(lx), dtype=bool)
        for c in self.circles:
            inside |= (lx - c.offset_x) ** 2 + ly ** 2 <= c.radius ** 2
        return inside

    def local_bounds(self) -> Tuple[float, float, float, float]:
        xmin = min(c.offset_x - c.radius for c in self.circles)
        xmax = max(c.offset_x + c.radius for c in self.circles)
        r = max(c.radius for c in self.circles)
        return (xmin, xmax, -r, r)

    def circumradius(self) -> float:
        return max(abs(c.offset_x) + c.radius for c in self.circles)

    def inscribed_radius(self) -> float:
        return max([c.radius - abs(c.offset_x) for c in self.circles] + [0.0])

    def inflated(self, margin: float) -> 'TwoCirclesFootprint':
        return TwoCirclesFootprint(Circle(self.circle_1.offset_x, self.circle_1.radius + margin),
                                   Circle(self.circle_2.offset_x, self.circle_2.radius + margin))

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'two_circles',
                'circle_1': asdict(self.circle_1),
                'circle_2': asdict(self.circle_2)}


@dataclass(frozen=True)
class CompositeFootprint:
    """
    Union of rigid footprint parts sharing one footprint frame.

    Used for planning with the trailer body and the tractor's safety zone at
    once: the tractor center stays on the trailer heading line at distance L
    from the axle for any hitch angle, so a circle at offset L covers it.
    """
    parts: Tuple[Any, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("A composite footprint needs at least one part")
        for part in parts:
            if isinstance(part, CompositeFootprint):
                raise ValueError("Composite footprints cannot be nested")
        object.__setattr__(self, 'parts', parts)

    def contains_local(self, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
        inside = np.zeros(np.shape(lx), dtype=bool)
        for part in self.parts:
            inside |= part.contains_local(lx, ly)
        return inside

    def local_bounds(self) -> Tuple[float, float, float, float]:
        bounds = [part.local_bounds() for part in self.parts]
        return (min(b[0] for b in bounds), max(b[1] for b in bounds),
                min(b[2] for b in bounds), max(b[3] for b in bounds))

    def circumradius(self) -> float:
        return max(part.circumradius() for part in self.parts)

    def inscribed_radius(self) -> float:
        return max(part.inscribed_radius() for part in self.parts)

    def inflated(self, margin: float) -> 'CompositeFootprint':
        return CompositeFootprint(tuple(part.inflated(margin) for part in self.parts))

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'composite', 'parts': [part.to_dict() for part in self.parts]}


Footprint = Union[RectangleFootprint, TwoCirclesFootprint, Circle, CompositeFootprint]


def footprint_from_dict(data: Dict[str, Any]) -> Footprint:
    """Build a footprint from its dictionary form (see to_dict)."""
    if not isinstance(data, dict):
        raise ValueError("Footprint must be given as a dictionary")
    kind = data.get('type')
    if kind == 'rectangle':
        return RectangleFootprint(float(data['length']), float(data['width']),
                                  float(data.get('offset_x', 0.0)))
    if kind == 'two_circles':
        return TwoCirclesFootprint(Circle(**data['circle_1']), Circle(**data['circle_2']))
    if kind == 'circle':
        return Circle(float(data.get('offset_x', 0.0)), float(data['radius']))
    if kind == 'composite':
        return CompositeFootprint(tuple(footprint_from_dict(part) for part in data['parts']))
    raise ValueError(f"Unknown footprint type: {kind!r}")


# ---------------------------------------------------------------------------
# Vehicle
# ---------------------------------------------------------------------------

def _default_tractor_footprint() -> RectangleFootprint:
    return RectangleFootprint(length=0.6, width=0.5, offset_x=0.0)


def _default_trailer_footprint() -> RectangleFootprint:
    # cart body between the caster axle frame and the hitch
    return RectangleFootprint(length=1.1, width=0.8, offset_x=0.15)


@dataclass(frozen=True)
class VehicleParams:
    """
    Geometry, limits and controller gains of the tractor-trailer system.

    safety_radius and two_circles are derived from the other fields when left
    as None. The safety zone is the tractor circumradius plus 3 cm. The Two
    Circles model puts one circle on the tractor center and one on the center
    of the trailer body, kept inside the body outline so that walls next to a
    planned path do not slow the local layer down.

    tractor_margin is the clearance the global planner keeps between the
    tractor's safety zone and the map, on top of the lattice footprint margin.
    """
    wheelbase_L: float = 1.0
    delta_max: float = 1.2
    v_max: float = 0.8
    omega_max: float = 1.0
    Kp: float = 2.0
    alpha: float = 0.5
    v_eps: float = 1e-3
    tractor_footprint: RectangleFootprint = field(default_factory=_default_tractor_footprint)
    trailer_footprint: RectangleFootprint = field(default_factory=_default_trailer_footprint)
    safety_radius: Optional[float] = None
    two_circles: Optional[TwoCirclesFootprint] = None
    tractor_margin: float = 0.07

    def __post_init__(self):
        if not self.wheelbase_L > 0:
            raise ValueError("wheelbase_L must be positive")
        if not 0 < self.delta_max < math.pi / 2:
            raise ValueError("delta_max must lie in (0, pi/2)")
        for name in ('v_max', 'omega_max', 'Kp', 'alpha', 'v_eps'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tractor_margin < 0:
            raise ValueError("tractor_margin must be non-negative")
        if self.safety_radius is None:
            object.__setattr__(self, 'safety_radius', self.tractor_footprint.circumradius() + 0.03)
        elif not self.safety_radius > 0:
            raise ValueError("safety_radius must be positive")
        if self.two_circles is None:
            xmin, xmax, ymin, ymax = self.trailer_footprint.local_bounds()
            body = Circle(0.5 * (xmin + xmax) - self.wheelbase_L, 0.4 * (ymax - ymin))
            object.__setattr__(self, 'two_circles', TwoCirclesFootprint(Circle(0.0, 0.35), body))

    @property
    def kappa_max(self) -> float:
        """Largest path curvature the trailer axle can follow."""
        return math.tan(self.delta_max) / self.wheelbase_L

    @property
    def planning_footprint(self) -> CompositeFootprint:
        """Trailer body plus the padded tractor safety zone, in the trailer axle frame."""
        return CompositeFootprint((self.trailer_footprint,
                                   Circle(self.wheelbase_L, self.safety_radius + self.tractor_margin)))


@dataclass(frozen=True)
class TrailerState:
    """
    Full state of the articulated vehicle.

    trailer_pose is the frame in the center of the fixed caster axle, delta the
    hitch angle (tractor heading minus trailer heading).
    """
    trailer_pose: Pose2D
    delta: float = 0.0
    v_tractor: float = 0.0
    omega_tractor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'delta', normalize_angle(float(self.delta)))

    def tractor_pose(self, p: VehicleParams) -> Pose2D:
        th = self.trailer_pose.theta
        return Pose2D(self.trailer_pose.x + p.wheelbase_L * math.cos(th),
                      self.trailer_pose.y + p.wheelbase_L * math.sin(th),
                      th + self.delta)


@dataclass(frozen=True)
class TractorCommand:
    """Tractor-frame velocities (x_dot', theta_dot')."""
    v: float
    omega: float


@dataclass(frozen=True)
class VelocityCommand:
    """Bicycle-frame velocities (x_dot, theta_dot) as issued by a local planner."""
    v: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.omega)):
            raise ValueError("Velocity command components must be finite")


@dataclass(frozen=True)
class SteeringSolution:
    kappa: float
    delta_target: float


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GoalTolerance:
    xy: float = 0.5
    theta: float = 0.2

    def __post_init__(self):
        if self.xy < 0 or self.theta < 0:
            raise ValueError("Goal tolerances must be non-negative")


@dataclass(frozen=True)
class CostWeights:
    """
    Weights of the lattice edge cost.

    length scales traveled distance, turning scales the bending energy
    (curvature squared times arc length), reverse multiplies the cost of
    reverse primitives. goal_offset and goal_heading weigh the terminal cost of
    stopping short of the exact goal inside its tolerance.
    """
    length: float = 1.0
    turning: float = 1.0
    reverse: float = 5.0
    goal_offset: float = 2.0
    goal_heading: float = 0.5

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("length weight must be positive")
        if self.turning < 0 or self.reverse < 1.0 or self.goal_heading < 0:
            raise ValueError("turning and goal_heading must be >= 0, reverse >= 1")
        if self.goal_offset < self.length:
            raise ValueError("goal_offset weight must not be smaller than the length weight")


DEFAULT_KAPPA_MAX = math.tan(1.2) / 1.0


@dataclass(frozen=True)
class LatticeConfig:
    xy_resolution: float = 0.1
    num_headings: int = 16
    kappa_max: float = DEFAULT_KAPPA_MAX
    primitive_lengths: Tuple[float, ...] = (0.2, 0.6)
    allow_reverse: bool = False
    cost_weights: CostWeights = field(default_factory=CostWeights)
    footprint_margin: float = 0.05
    snap_tolerance: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'primitive_lengths', tuple(float(v) for v in self.primitive_lengths))
        if not self.xy_resolution > 0:
            raise ValueError("xy_resolution must be positive")
        if self.num_headings < 8 or self.num_headings % 4 != 0:
            raise ValueError("num_headings must be >= 8 and divisible by 4")
        if not self.kappa_max > 0:
            raise ValueError("kappa_max must be positive")
        if not self.primitive_lengths or any(v <= 0 for v in self.primitive_lengths):
            raise ValueError("primitive_lengths must be a non-empty list of positive lengths")
        if self.footprint_margin < 0:
            raise ValueError("footprint_margin must be non-negative")
        if self.snap_tolerance is None:
            object.__setattr__(self, 'snap_tolerance', 0.5 * self.xy_resolution)
        elif not self.snap_tolerance > 0:
            raise ValueError("snap_tolerance must be positive")

    @classmethod
    def for_vehicle(cls, p: VehicleParams, **overrides) -> 'LatticeConfig':
        """Lattice configuration whose curvature bound matches the vehicle."""
        overrides.setdefault('kappa_max', p.kappa_max)
        return cls(**overrides)

    @property
    def heading_bin(self) -> float:
        return 2.0 * math.pi / self.num_headings

    def heading_angle(self, index: int) -> float:
        return normalize_angle(index * self.heading_bin)

    def heading_index(self, theta: float) -> int:
        return int(round(normalize_angle(theta) / self.heading_bin)) % self.num_headings


@dataclass(frozen=True)
class MotionPrimitive:
    """
    One lattice edge.

    sampled_poses are relative to the start lattice point (absolute
    orientation). They follow the exact constant-curvature arc and end with
    the snapped lattice pose, so consecutive samples are at most
    xy_resolution apart.
    """
    primitive_id: int
    start_heading_index: int
    end_delta: Tuple[int, int, int]
    curvature: float
    arc_length: float
    sampled_poses: Tuple[Pose2D, ...]
    cost: float
    path_length: float
    reverse: bool = False

    @property
    def key(self) -> Tuple[int, int, int, int, bool]:
        dx, dy, dh = self.end_delta
        return (self.start_heading_index, dx, dy, dh, self.reverse)


@dataclass(frozen=True)
class GlobalPath:
    poses: Tuple[Pose2D, ...]
    total_cost: float
    primitive_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        if not self.poses:
            raise ValueError("A path needs at least one pose")
        object.__setattr__(self, 'poses', tuple(self.poses))
        object.__setattr__(self, 'primitive_ids', tuple(self.primitive_ids))

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([[q.x, q.y] for q in self.poses], dtype=float)

    @cached_property
    def cumulative_length(self) -> np.ndarray:
        steps = np.hypot(*np.diff(self.positions, axis=0).T) if len(self.poses) > 1 else np.zeros(0)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def length(self) -> float:
        return float(self.cumulative_length[-1])

    @cached_property
    def turn_rates(self) -> np.ndarray:
        """
        Discrete curvature 2*sin(|dtheta|/2)/chord of the segment leaving each pose.

        The last pose and zero-length segments get 0.
        """
        rates = np.zeros(len(self.poses))
        steps = np.diff(self.cumulative_length)
        for i, (a, b) in enumerate(zip(self.poses, self.poses[1:])):
            if steps[i] > 1e-12:
                rates[i] = 2.0 * math.sin(0.5 * abs(normalize_angle(b.theta - a.theta))) / steps[i]
        return rates

    @property
    def end(self) -> Pose2D:
        return self.poses[-1]


# ---------------------------------------------------------------------------
# Tracking
# ---------------------------------------------------------------------------

class TrackingState(str, Enum):
    TRACKING = 'tracking'
    GOAL_REACHED = 'goal_reached'
    BLOCKED = 'blocked'
    STUCK = 'stuck'


@dataclass(frozen=True)
class TrackerConfig:
    lookahead: float = 0.8
    v_cruise: float = 0.6
    slow_radius: float = 0.7
    obstacle_slow_band: float = 0.1
    curve_slowdown: float = 0.6
    local_window: float = 3.0
    goal_tol: GoalTolerance = field(default_factory=GoalTolerance)
    v_creep: float = 0.1
    blocked_dwell: float = 5.0
    stuck_timeout: float = 15.0
    progress_epsilon: float = 0.02

    def __post_init__(self):
        if not self.lookahead > 0:
            raise ValueError("lookahead must be positive")
        if not self.slow_radius > 0:
            raise ValueError("slow_radius must be positive")
        if not self.v_cruise > 0 or not 0 < self.v_creep <= self.v_cruise:
            raise ValueError("v_cruise must be positive and v_creep within (0, v_cruise]")
        if not self.obstacle_slow_band > 0 or not self.local_window > 0:
            raise ValueError("obstacle_slow_band and local_window must be positive")
        if self.curve_slowdown < 0:
            raise ValueError("curve_slowdown must be non-negative")


@dataclass(frozen=True)
class TrackerStatus:
    state: TrackingState
    progress_index: int
    time_without_progress: float


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

class AbortReason(str, Enum):
    NONE = 'none'
    SAFETY_ZONE = 'safety_zone'
    TRACKER_STUCK = 'tracker_stuck'
    TIMEOUT = 'timeout'
    NO_PATH = 'no_path'


@dataclass(frozen=True)
class DynamicObstacle:
    """Moving circular obstacle with constant velocity."""
    center: Tuple[float, float]
    radius: float
    velocity: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("Obstacle radius must be positive")
        object.__setattr__(self, 'center', (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, 'velocity', (float(self.velocity[0]), float(self.velocity[1])))


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    state: TrailerState
    command: TractorCommand


@dataclass(frozen=True)
class TargetResult:
    target: Pose2D
    reached: bool
    duration: float
    abort_reason: AbortReason
    trajectory: Tuple[TrajectorySample, ...] = ()
    replans: int = 0

    def __post_init__(self):
        if self.reached and self.abort_reason is not AbortReason.NONE:
            raise ValueError("A reached target cannot carry an abort reason")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

LAYOUTS = ('loop_course', 'single_corner')
MIN_CORRIDOR_WIDTH = 1.0
MAX_CORRIDOR_WIDTH = 3.0


@dataclass(frozen=True)
class Scenario:
    """Experiment definition; see scenario_loader for the file format."""
    layout: str = 'loop_course'
    corridor_widths: Tuple[float, ...] = (2.0, 1.9, 1.8, 1.7, 1.6, 1.5, 1.4)
    corridor_length: float = 10.0
    runs: int = 25
    targets_per_run: int = 10
    seeds: Tuple[int, ...] = ()
    base_seed: int = 0
    tolerances: GoalTolerance = field(default_factory=GoalTolerance)
    timeout: float = 120.0
    dt: float = 0.02
    grid_resolution: float = 0.05
    start_jitter: GoalTolerance = field(default_factory=lambda: GoalTolerance(0.02, 0.02))
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    lattice: Optional[LatticeConfig] = None
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        widths = tuple(float(w) for w in self.corridor_widths)
        if not widths:
            raise ValueError("At least one corridor width is required")
        for w in widths:
            if not MIN_CORRIDOR_WIDTH <= w <= MAX_CORRIDOR_WIDTH:
                raise ValueError(f"corridor width {w} outside [{MIN_CORRIDOR_WIDTH}, {MAX_CORRIDOR_WIDTH}] m")
        object.__setattr__(self, 'corridor_widths', widths)
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.targets_per_run < 1:
            raise ValueError("targets_per_run must be >= 1")
        if self.seeds and len(self.seeds) < self.runs:
            raise ValueError("seeds must list one seed per run when given")
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must lie in (0, 0.1]")
        if not self.timeout > 0 or not self.grid_resolution > 0 or not self.corridor_length > 0:
            raise ValueError("timeout, grid_resolution and corridor_length must be positive")
        if self.tracker.v_cruise > self.vehicle.v_max:
            raise ValueError("tracker v_cruise must not exceed vehicle v_max")
        if self.lattice is None:
            object.__setattr__(self, 'lattice', LatticeConfig.for_vehicle(self.vehicle))

    def seed_for_run(self, run: int) -> int:
        return self.seeds[run] if self.seeds else self.base_seed + run


@dataclass
class WidthMetrics:
    targets_attempted: int
    targets_reached: int
    success_rate: float
    mean_time_per_target: float
    aborts_by_reason: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.targets_reached > self.targets_attempted:
            raise ValueError("targets_reached cannot exceed targets_attempted")


@dataclass
class BatchMetrics:
    per_width: Dict[float, WidthMetrics] = field(default_factory=dict)

    def widths(self) -> List[float]:
        return sorted(self.per_width)
