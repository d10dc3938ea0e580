"""Exact routing of capacity-limited agents that intercept moving targets among obstacles."""

from .errors import MTVRPOError
from .instance import Instance, Target, Window, generate_instance, parse_instance, serialize_instance
from .oracle import brute_force_solve
from .solver import Solution, SolverConfig, solve
from .validate import validate_solution

__all__ = [
    "Instance",
    "MTVRPOError",
    "Solution",
    "SolverConfig",
    "Target",
    "Window",
    "brute_force_solve",
    "generate_instance",
    "parse_instance",
    "serialize_instance",
    "solve",
    "validate_solution",
]
