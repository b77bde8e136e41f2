"""Numerical tools for radial singular p-Laplace problems

    -Delta_p u - lam u^-delta = f   or   -Delta_p u = lam (u^-delta + G(u))

in a ball, with u > 0 inside and u = 0 on the boundary.
"""

from .expr import DomainError, ExprError, ExprSyntaxError, parse_radial_fn, parse_scalar_fn
from .model import (
    Autonomous,
    Frozen,
    RadialProblem,
    RadialProfile,
    Source,
    graded_nodes,
    phi_p,
    phi_p_inv,
    uniform_nodes,
)

__version__ = "0.1.0"

__all__ = [
    "Autonomous",
    "DomainError",
    "ExprError",
    "ExprSyntaxError",
    "Frozen",
    "RadialProblem",
    "RadialProfile",
    "Source",
    "graded_nodes",
    "parse_radial_fn",
    "parse_scalar_fn",
    "phi_p",
    "phi_p_inv",
    "uniform_nodes",
]
