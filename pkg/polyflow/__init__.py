from polyflow.convergence import eoc_study, self_similar_pcf
from polyflow.fields import PointSource, Rotation, Uniform, VectorField
from polyflow.flows import (
    AdvectedFlow,
    AreaPreservingCurvatureFlow,
    CurvatureFlow,
    CustomLaw,
    VelocityLaw,
    cas_residual,
)
from polyflow.geometry import (
    Polygon,
    PolygonClass,
    class_and_heights_from_vertices,
    class_from_normals,
    regular_class,
)
from polyflow.stepper import Scheme, SolverConfig, euler_step, midpoint_step, run
from polyflow.trajectory import Termination, Trajectory

__all__ = [
    "AdvectedFlow",
    "AreaPreservingCurvatureFlow",
    "CurvatureFlow",
    "CustomLaw",
    "PointSource",
    "Polygon",
    "PolygonClass",
    "Rotation",
    "Scheme",
    "SolverConfig",
    "Termination",
    "Trajectory",
    "Uniform",
    "VectorField",
    "VelocityLaw",
    "cas_residual",
    "class_and_heights_from_vertices",
    "class_from_normals",
    "eoc_study",
    "euler_step",
    "midpoint_step",
    "regular_class",
    "run",
    "self_similar_pcf",
]
