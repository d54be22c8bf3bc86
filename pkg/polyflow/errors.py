"""Exceptions raised by polyflow.

Geometry errors are also ``ValueError`` and step failures are also
``RuntimeError`` so that callers outside the package can catch them with the
builtin types.
"""

from __future__ import annotations

from typing import Sequence

EDGE_COLLAPSE = "edge_collapse"
SIMPLICITY_LOST = "simplicity_lost"
LEFT_DOMAIN = "left_domain"


class PolyflowError(Exception):
    pass


class GeometryError(PolyflowError, ValueError):
    pass


class DegenerateClass(GeometryError):
    """Consecutive normals are equal or antipodal."""


class NotClosed(GeometryError):
    """Outer angles do not sum to 2*pi."""


class NonSimple(GeometryError):
    pass


class ZeroEdge(GeometryError):
    pass


class NotCCW(GeometryError):
    pass


class ClassMismatch(GeometryError):
    pass


class EdgeCollapse(GeometryError):
    pass


class InvalidPolygon(GeometryError):
    pass


class FlowError(PolyflowError):
    pass


class SingularFieldOnEdge(FlowError, ValueError):
    pass


class GeometryViolation(FlowError, ValueError):
    """A singular point of the field lies outside the polygon."""


class NoDeclaredMu(FlowError, ValueError):
    pass


class InvalidBall(FlowError, ValueError):
    pass


class StepError(PolyflowError, RuntimeError):
    pass


class ResultInvalid(StepError):
    def __init__(self, message: str, reason: str = EDGE_COLLAPSE):
        super().__init__(message)
        self.reason = reason


class MidpointInvalid(StepError):
    def __init__(self, message: str, reason: str = EDGE_COLLAPSE):
        super().__init__(message)
        self.reason = reason


class FixedPointDivergence(StepError):
    def __init__(self, message: str, distances: Sequence[float] = ()):
        super().__init__(message)
        self.distances = list(distances)


class ReferenceUnavailable(PolyflowError):
    pass


class ConfigError(PolyflowError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class RenderError(PolyflowError, OSError):
    pass
