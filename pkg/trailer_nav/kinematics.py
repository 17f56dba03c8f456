"""
Kinematic model of the on-axle tractor-trailer system.

The tractor is integrated as a unicycle under (v', omega'); the trailer
heading follows theta_dot = (v'/L) * sin(delta). The hitch angle is recomputed
from both headings after every step instead of being integrated on its own.
"""

import logging
import math
from typing import Iterable, List

from .angles import normalize_angle
from .models import Pose2D, TractorCommand, TrailerState, VehicleParams

logger = logging.getLogger(__name__)

MAX_DT = 0.1


class KinematicsError(ValueError):
    """Custom exception for invalid integration requests."""
    pass


def derive_tractor_pose(s: TrailerState, p: VehicleParams) -> Pose2D:
    """Tractor center pose: (x + L cos theta, y + L sin theta, theta + delta)."""
    return s.tractor_pose(p)


def state_from_tractor(tractor: Pose2D, delta: float, p: VehicleParams) -> TrailerState:
    """Trailer state whose derived tractor pose is the given one."""
    theta = tractor.theta - delta
    return TrailerState(Pose2D(tractor.x - p.wheelbase_L * math.cos(theta),
                               tractor.y - p.wheelbase_L * math.sin(theta),
                               theta), delta)


def _derivative(psi: float, theta: float, v: float, omega: float, L: float):
    return (v * math.cos(psi), v * math.sin(psi), omega, (v / L) * math.sin(psi - theta))


def step(s: TrailerState, cmd: TractorCommand, dt: float, p: VehicleParams) -> TrailerState:
    """
    Advance the vehicle by dt with the explicit midpoint (RK2) rule.

    Args:
        s: Current state
        cmd: Tractor command held over the step
        dt: Step length in seconds, must lie in (0, 0.1]
        p: Vehicle parameters

    Returns:
        New state with normalized angles; velocities are those of cmd

    Raises:
        KinematicsError: If dt is out of range
    """
    if not (0.0 < dt <= MAX_DT):
        raise KinematicsError(f"dt must lie in (0, {MAX_DT}], got {dt!r}")

    L = p.wheelbase_L
    theta = s.trailer_pose.theta
    psi = theta + s.delta
    x = s.trailer_pose.x + L * math.cos(theta)
    y = s.trailer_pose.y + L * math.sin(theta)
    v, omega = cmd.v, cmd.omega

    k1 = _derivative(psi, theta, v, omega, L)
    h = 0.5 * dt
    k2 = _derivative(psi + h * k1[2], theta + h * k1[3], v, omega, L)

    x += dt * k2[0]
    y += dt * k2[1]
    psi += dt * k2[2]
    theta += dt * k2[3]

    return TrailerState(
        trailer_pose=Pose2D(x - L * math.cos(theta), y - L * math.sin(theta), theta),
        delta=normalize_angle(psi - theta),
        v_tractor=v,
        omega_tractor=omega,
    )


def rollout(s: TrailerState, commands: Iterable[TractorCommand], dt: float,
            p: VehicleParams) -> List[TrailerState]:
    """Apply commands in sequence; returns every state including the initial one."""
    states = [s]
    for cmd in commands:
        states.append(step(states[-1], cmd, dt, p))
    return states


def equilibrium_omega(v: float, delta: float, p: VehicleParams) -> float:
    """Tractor yaw rate that keeps the hitch angle constant at speed v."""
    return (v / p.wheelbase_L) * math.sin(delta)


def trailer_speed(v: float, delta: float) -> float:
    """Speed of the trailer axle along its heading."""
    return v * math.cos(delta)
