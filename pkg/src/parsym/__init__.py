"""Numerical experiments on convex gradient functionals ``int f(|Dv|) - v`` over planar domains."""

from .errors import (
    EmptyLevelSetError,
    EstimationError,
    GeometryError,
    InversionError,
    NonConvergenceError,
    ParsymError,
    PreconditionError,
    ProfileError,
    TopologyError,
    UndefinedNormalError,
)
from .profile import LagrangeanProfile, conjugate_gprime, make_profile, verify_profile

__version__ = "0.1.0"
