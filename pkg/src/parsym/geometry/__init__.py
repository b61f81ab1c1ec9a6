from .domain import (
    Domain,
    Grid,
    LevelSet,
    ScalarField,
    boundary_normal,
    distance_field,
    inner_domain,
    interior_sphere_radius,
    level_set,
    minkowski_check,
    parallel_surface,
    uniform_interior_radius,
)
from .reflection import CriticalConfiguration, ReflectionFrame, caps_and_critical_lambda, reflect
from .shapes import SHAPES, build_shape

__all__ = [
    "Domain",
    "Grid",
    "LevelSet",
    "ScalarField",
    "ReflectionFrame",
    "CriticalConfiguration",
    "SHAPES",
    "boundary_normal",
    "build_shape",
    "caps_and_critical_lambda",
    "distance_field",
    "inner_domain",
    "interior_sphere_radius",
    "level_set",
    "minkowski_check",
    "parallel_surface",
    "reflect",
    "uniform_interior_radius",
]
