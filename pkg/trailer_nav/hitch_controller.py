"""
Hitch controller: maps a bicycle-frame velocity command to tractor velocities.

The requested curvature fixes a steering (hitch) target, a P-controller turns
the tractor toward it, and the forward speed is gated by a Gaussian of the
normalized steering deviation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

from .angles import normalize_angle
from .models import SteeringSolution, TractorCommand, TrailerState, VehicleParams, VelocityCommand

logger = logging.getLogger(__name__)

__all__ = [
    'ControllerSession', 'DegenerateCommandError', 'control_step',
    'gate_factor', 'normalize_angle', 'target_steering',
]


class DegenerateCommandError(Exception):
    """Raised when a turn is requested at (near) zero forward speed."""
    pass


@dataclass
class ControllerSession:
    """Per-loop controller memory; owned by a single simulation loop."""
    held_delta_target: Optional[float] = None


def _clamp(value: float, limit: float) -> float:
    return max(-limit, min(limit, value))


def target_steering(cmd: VelocityCommand, p: VehicleParams) -> SteeringSolution:
    """
    Steering target for a bicycle-frame command.

    Args:
        cmd: Requested (v, omega) of the trailer axle
        p: Vehicle parameters

    Returns:
        SteeringSolution with kappa = omega / v and the clamped target
        delta = atan(L * kappa)

    Raises:
        DegenerateCommandError: If |v| < v_eps while omega is non-zero
    """
    if abs(cmd.v) < p.v_eps:
        if cmd.omega != 0.0:
            raise DegenerateCommandError(
                f"Cannot turn in place: v={cmd.v!r}, omega={cmd.omega!r}")
        return SteeringSolution(kappa=0.0, delta_target=0.0)
    kappa = cmd.omega / cmd.v
    delta = _clamp(math.atan(p.wheelbase_L * kappa), p.delta_max)
    return SteeringSolution(kappa=kappa, delta_target=delta)


def gate_factor(deviation: float, alpha: float) -> float:
    """Gaussian activation exp(-deviation^2 / alpha^2), in (0, 1]."""
    return math.exp(-(deviation * deviation) / (alpha * alpha))


def control_step(cmd: VelocityCommand, s: TrailerState, p: VehicleParams,
                 session: Optional[ControllerSession] = None) -> TractorCommand:
    """
    One controller update.

    A degenerate command (|v| < v_eps with omega != 0) keeps the previous
    steering target, or the current hitch angle when none is held; the tractor
    only turns toward it and v = 0. A slow straight command (|v| < v_eps,
    omega == 0) is an ordinary command with target delta 0.

    Args:
        cmd: Bicycle-frame command from the local planner
        s: Current vehicle state (delta is the measured hitch angle)
        p: Vehicle parameters
        session: Optional controller memory for the held target

    Returns:
        TractorCommand clamped to v_max and omega_max
    """
    if abs(cmd.v) < p.v_eps and cmd.omega != 0.0:
        held = session.held_delta_target if session is not None else None
        delta_target = s.delta if held is None else held
        deviation = normalize_angle(delta_target - s.delta)
        return TractorCommand(v=0.0, omega=_clamp(p.Kp * deviation, p.omega_max))

    delta_target = target_steering(cmd, p).delta_target
    if session is not None:
        session.held_delta_target = delta_target

    deviation = normalize_angle(delta_target - s.delta)
    omega = _clamp(p.Kp * deviation, p.omega_max)
    v = _clamp(cmd.v * gate_factor(deviation, p.alpha), p.v_max)
    return TractorCommand(v=v, omega=omega)
