import math

import numpy as np
import pytest

from trailer_nav.kinematics import (KinematicsError, derive_tractor_pose, equilibrium_omega,
                                    rollout, state_from_tractor, step, trailer_speed)
from trailer_nav.models import Pose2D, TractorCommand, TrailerState, VehicleParams

from tests.oracles import arc_reference


@pytest.fixture
def unit_vehicle():
    return VehicleParams(wheelbase_L=1.0)


@pytest.mark.parametrize("trailer, delta, expected", [
    ((0.0, 0.0, 0.0), 0.0, (1.0, 0.0, 0.0)),
    ((0.0, 0.0, 0.0), math.pi / 4, (1.0, 0.0, math.pi / 4)),
    ((2.0, 3.0, math.pi / 2), 0.0, (2.0, 4.0, math.pi / 2)),
])
def test_derive_tractor_pose(unit_vehicle, trailer, delta, expected):
    tractor = derive_tractor_pose(TrailerState(Pose2D(*trailer), delta), unit_vehicle)
    assert tractor.as_tuple() == pytest.approx(expected, abs=1e-12)


def test_state_from_tractor_inverts_derivation(unit_vehicle):
    s = TrailerState(Pose2D(1.5, -2.0, 0.7), -0.4)
    back = state_from_tractor(derive_tractor_pose(s, unit_vehicle), s.delta, unit_vehicle)
    assert back.trailer_pose.as_tuple() == pytest.approx(s.trailer_pose.as_tuple(), abs=1e-12)


def test_straight_step_advances_along_heading(unit_vehicle):
    s = TrailerState(Pose2D(0.0, 0.0, 0.3), 0.0)
    nxt = step(s, TractorCommand(1.0, 0.0), 0.1, unit_vehicle)
    assert nxt.trailer_pose.x == pytest.approx(0.1 * math.cos(0.3), abs=1e-12)
    assert nxt.trailer_pose.y == pytest.approx(0.1 * math.sin(0.3), abs=1e-12)
    assert nxt.delta == pytest.approx(0.0, abs=1e-15)
    assert (nxt.v_tractor, nxt.omega_tractor) == (1.0, 0.0)


def test_straight_step_is_reversible(unit_vehicle):
    s = TrailerState(Pose2D(0.4, -1.2, 2.0), 0.0)
    there = step(s, TractorCommand(0.8, 0.0), 0.05, unit_vehicle)
    back = step(there, TractorCommand(-0.8, 0.0), 0.05, unit_vehicle)
    assert back.trailer_pose.as_tuple() == pytest.approx(s.trailer_pose.as_tuple(), abs=1e-12)
    assert back.delta == pytest.approx(s.delta, abs=1e-12)


@pytest.mark.parametrize("dt", [0.0, -0.01, 0.1000001, 1.0])
def test_step_rejects_dt_out_of_range(unit_vehicle, dt):
    with pytest.raises(KinematicsError):
        step(TrailerState(Pose2D(0, 0, 0)), TractorCommand(0.5, 0.0), dt, unit_vehicle)


def test_hitch_angle_converges_to_equilibrium(unit_vehicle):
    s = TrailerState(Pose2D(0.0, 0.0, 0.0), 0.0)
    for _ in range(2000):
        s = step(s, TractorCommand(1.0, 0.5), 0.01, unit_vehicle)
    assert s.delta == pytest.approx(math.asin(0.5), abs=1e-6)
    assert math.asin(equilibrium_omega(1.0, math.pi / 6, unit_vehicle)) == pytest.approx(
        math.pi / 6, abs=1e-9)


def test_equilibrium_hitch_angle_is_a_fixed_point(unit_vehicle):
    delta = math.pi / 6
    s = TrailerState(Pose2D(0.0, 0.0, 0.0), delta)
    cmd = TractorCommand(0.5, equilibrium_omega(0.5, delta, unit_vehicle))
    for _ in range(100):
        nxt = step(s, cmd, 1e-3, unit_vehicle)
        assert abs(nxt.delta - s.delta) <= 1e-9
        s = nxt


@pytest.mark.parametrize("delta", [math.pi / 6, 0.5, -0.8])
def test_equilibrium_arc_matches_closed_form(unit_vehicle, delta):
    v, dt = 0.5, 1e-3
    omega = equilibrium_omega(v, delta, unit_vehicle)
    sweep_rate = v * math.sin(abs(delta)) / unit_vehicle.wheelbase_L
    steps = int(round((math.pi / 2) / sweep_rate / dt))
    s = TrailerState(Pose2D(0.0, 0.0, 0.0), delta)
    for _ in range(steps):
        s = step(s, TractorCommand(v, omega), dt, unit_vehicle)
    expected = arc_reference(delta, v, unit_vehicle.wheelbase_L, steps * dt)
    radius = abs(unit_vehicle.wheelbase_L / math.tan(delta))
    error = math.hypot(s.trailer_pose.x - expected.x, s.trailer_pose.y - expected.y)
    assert error <= 1e-3 * radius
    assert s.trailer_pose.theta == pytest.approx(expected.theta, abs=1e-6)


def test_circle_radius_at_thirty_degrees(unit_vehicle):
    delta = math.pi / 6
    s = TrailerState(Pose2D(0.0, 0.0, 0.0), delta)
    cmd = TractorCommand(0.5, equilibrium_omega(0.5, delta, unit_vehicle))
    center = (0.0, unit_vehicle.wheelbase_L / math.tan(delta))
    for _ in range(3000):
        s = step(s, cmd, 1e-3, unit_vehicle)
    r = math.hypot(s.trailer_pose.x - center[0], s.trailer_pose.y - center[1])
    assert r == pytest.approx(1.7320508, rel=1e-3)


def test_trailer_has_no_lateral_velocity(unit_vehicle):
    s = TrailerState(Pose2D(0.0, 0.0, 0.2), 0.3)
    dt = 1e-3
    states = rollout(s, [TractorCommand(0.6, 0.4)] * 50, dt, unit_vehicle)
    for a, b in zip(states, states[1:]):
        dx, dy = b.trailer_pose.x - a.trailer_pose.x, b.trailer_pose.y - a.trailer_pose.y
        th = 0.5 * (a.trailer_pose.theta + b.trailer_pose.theta)
        lateral = -math.sin(th) * dx + math.cos(th) * dy
        forward = math.cos(th) * dx + math.sin(th) * dy
        assert abs(lateral) <= 1e-6 * dt
        assert forward / dt == pytest.approx(trailer_speed(0.6, 0.5 * (a.delta + b.delta)), rel=1e-3)


def test_midpoint_integrator_is_second_order(unit_vehicle):
    def endpoint(dt):
        s = TrailerState(Pose2D(0.0, 0.0, 0.0), 0.0)
        for _ in range(int(round(10.0 / dt))):
            s = step(s, TractorCommand(0.6, 0.3), dt, unit_vehicle)
        return np.array([s.trailer_pose.x, s.trailer_pose.y])

    reference = endpoint(0.0025)
    e1 = np.linalg.norm(endpoint(0.04) - reference)
    e2 = np.linalg.norm(endpoint(0.02) - reference)
    order = math.log2(e1 / e2)
    assert order == pytest.approx(2.0, rel=0.1)
