"""
Angle helpers shared by the models and the hitch controller.
"""

import math

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """
    Wrap an angle into the half-open interval [-pi, pi).

    Uses the floored (non-negative) modulo: (a + pi) mod 2pi - pi, so +pi maps
    to -pi.

    Args:
        a: Angle in radians, must be finite

    Returns:
        Equivalent angle in [-pi, pi)
    """
    if not math.isfinite(a):
        raise ValueError(f"Angle must be finite, got {a!r}")
    wrapped = (a + math.pi) % TWO_PI - math.pi
    # float modulo can round up to exactly 2pi for tiny negative inputs
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    return wrapped


def angle_diff(a: float, b: float) -> float:
    """Signed smallest difference a - b, wrapped into [-pi, pi)."""
    return normalize_angle(a - b)
