"""
Navigation stack and deterministic simulator for an on-axle tractor-trailer
robot: occupancy-grid world, kinematics, hitch controller, lattice planner,
path tracker, whitelist cover, closed-loop simulator and experiment runner.
"""

__version__ = "1.0.0"
