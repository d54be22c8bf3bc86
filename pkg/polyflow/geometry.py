"""Polygons with fixed normal directions.

A class of polygons is fixed by the cyclic sequence of outward edge normals
n_j = (cos theta_j, sin theta_j). Edge j runs from vertex w_{j-1} to vertex
w_j and lies on the line n_j . x = h_j, so a member of the class is fully
described by its height vector h. All arrays are 0-based with periodic
wraparound: index -1 is N-1 and index N is 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from loguru import logger

from polyflow.errors import (
    ClassMismatch,
    DegenerateClass,
    EdgeCollapse,
    NonSimple,
    NotCCW,
    NotClosed,
    ZeroEdge,
)

ANGLE_EPS = 1e-12
CLOSURE_TOL = 1e-9
CLASS_MATCH_TOL = 1e-12


def _prev(x: np.ndarray) -> np.ndarray:
    """x[j-1] aligned with index j."""
    return np.roll(x, 1, axis=0)


def _next(x: np.ndarray) -> np.ndarray:
    """x[j+1] aligned with index j."""
    return np.roll(x, -1, axis=0)


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


@dataclass(frozen=True, eq=False)
class PolygonClass:
    """Fixed normals of a polygon family and the coefficients derived from them.

    ``a``, ``b`` give the edge lengths as a linear map of the heights,
    ``eta`` gives the total length as eta . h, and ``c_star`` bounds how
    fast any edge length can change per unit of height distance.
    """

    normal_angles: np.ndarray
    outer_angles: np.ndarray
    a: np.ndarray
    b: np.ndarray
    eta: np.ndarray
    c_star: float

    def __post_init__(self):
        for name in ("normal_angles", "outer_angles", "a", "b", "eta"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return len(self.normal_angles)

    @cached_property
    def normals(self) -> np.ndarray:
        out = np.column_stack([np.cos(self.normal_angles), np.sin(self.normal_angles)])
        out.setflags(write=False)
        return out

    @cached_property
    def tangents(self) -> np.ndarray:
        # t_j is n_j rotated by +pi/2, so det(n_j, t_j) = 1
        out = np.column_stack([-self.normals[:, 1], self.normals[:, 0]])
        out.setflags(write=False)
        return out

    @property
    def pcf_area_speed(self) -> float:
        """Area speed of the curvature flow, -2 * sum tan(phi_j / 2)."""
        return float(-np.sum(self.eta))

    def edge_lengths_of(self, h: np.ndarray) -> np.ndarray:
        """Apply the (linear) height-to-edge-length map to any vector."""
        h = np.asarray(h, dtype=float)
        return _prev(self.a) * _prev(h) + self.b * h + self.a * _next(h)

    def matches(self, other: "PolygonClass") -> bool:
        if other is self:
            return True
        if other.n != self.n:
            return False
        return bool(np.allclose(self.normals, other.normals, rtol=0.0, atol=CLASS_MATCH_TOL))

    def polygon(self, h: Sequence[float] | np.ndarray) -> "Polygon":
        return Polygon(self, np.asarray(h, dtype=float))

    def coefficient_table(self) -> dict[str, list[float]]:
        return {
            "normal_angle": self.normal_angles.tolist(),
            "outer_angle": self.outer_angles.tolist(),
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "eta": self.eta.tolist(),
        }


@dataclass(frozen=True, eq=False)
class Polygon:
    pclass: PolygonClass
    h: np.ndarray = field(repr=False)

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        if h.shape != (self.pclass.n,):
            raise ValueError(f"expected {self.pclass.n} heights, got shape {h.shape}")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    def __repr__(self) -> str:
        return f"Polygon(n={self.pclass.n}, h={np.array2string(self.h, precision=6)})"

    @property
    def n(self) -> int:
        return self.pclass.n

    def vertices(self) -> np.ndarray:
        """Vertex w_j is where the lines of edges j and j+1 meet."""
        nj = self.pclass.normals
        nk = _next(nj)
        hj, hk = self.h, _next(self.h)
        det = _cross(nj, nk)  # = sin(phi_j), nonzero for a valid class
        x = (hj * nk[:, 1] - hk * nj[:, 1]) / det
        y = (hk * nj[:, 0] - hj * nk[:, 0]) / det
        return np.column_stack([x, y])

    def edge_lengths(self) -> np.ndarray:
        return self.pclass.edge_lengths_of(self.h)

    def min_edge(self) -> float:
        return float(np.min(self.edge_lengths()))

    def total_length(self) -> float:
        return float(self.pclass.eta @ self.h)

    def area(self) -> float:
        return float(0.5 * (self.edge_lengths() @ self.h))

    def curvatures(self, min_edge: float = 0.0) -> np.ndarray:
        lengths = self.edge_lengths()
        if np.any(lengths <= min_edge):
            j = int(np.argmin(lengths))
            raise EdgeCollapse(f"edge {j} has length {lengths[j]:.3e} <= {min_edge:.3e}")
        return self.pclass.eta / lengths

    def with_heights(self, h: np.ndarray) -> "Polygon":
        return Polygon(self.pclass, h)

    def translated(self, c: Sequence[float]) -> "Polygon":
        return Polygon(self.pclass, self.h + self.pclass.normals @ np.asarray(c, dtype=float))

    def scaled(self, s: float) -> "Polygon":
        return Polygon(self.pclass, s * self.h)

    def to_json(self) -> dict[str, list[float]]:
        return {"normal_angles": self.pclass.normal_angles.tolist(), "heights": self.h.tolist()}


@dataclass(frozen=True)
class ValidityReport:
    sigma: float
    edges_positive: bool
    simple: bool
    rho_lower: float

    @property
    def valid(self) -> bool:
        return self.edges_positive and self.simple


def class_from_normals(angles: Sequence[float] | np.ndarray) -> PolygonClass:
    theta = np.asarray(angles, dtype=float)
    if theta.ndim != 1 or len(theta) < 3:
        raise DegenerateClass(f"need at least 3 normal angles, got {theta.shape}")

    n = np.column_stack([np.cos(theta), np.sin(theta)])
    t = np.column_stack([-n[:, 1], n[:, 0]])
    t_next = _next(t)
    phi = np.arctan2(_cross(t, t_next), np.einsum("ij,ij->i", t, t_next))

    bad = np.flatnonzero((np.abs(phi) < ANGLE_EPS) | (np.abs(phi) >= np.pi - ANGLE_EPS))
    if len(bad):
        raise DegenerateClass(
            f"outer angle at vertex {int(bad[0])} is {phi[bad[0]]:.6g}; "
            "consecutive normals must be distinct and not antipodal"
        )
    total = float(np.sum(phi))
    if abs(total - 2 * np.pi) > CLOSURE_TOL:
        raise NotClosed(f"outer angles sum to {total:.12g}, expected 2*pi")

    sin_phi = np.sin(phi)
    cot_phi = np.cos(phi) / sin_phi
    a = 1.0 / sin_phi
    b = -_prev(cot_phi) - cot_phi
    half_tan = np.tan(phi / 2)
    eta = half_tan + _prev(half_tan)
    c_star = float(np.max(np.abs(_prev(a)) + np.abs(b) + np.abs(a)))
    return PolygonClass(
        normal_angles=theta, outer_angles=phi, a=a, b=b, eta=eta, c_star=c_star
    )


def regular_class(n: int, phase: float = 0.0) -> PolygonClass:
    return class_from_normals(phase + 2 * np.pi * np.arange(n) / n)


def signed_area(points: np.ndarray) -> float:
    """Shoelace formula, positive for counterclockwise vertex order."""
    pts = np.asarray(points, dtype=float)
    return float(0.5 * np.sum(_cross(pts, _next(pts))))


def _orient(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return _cross(b - a, c - a)


def _within_box(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    return np.all((lo <= c) & (c <= hi), axis=-1)


def segments_intersect(a, b, c, d) -> np.ndarray:
    """Closed-segment intersection test for segments ab and cd (vectorized)."""
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)
    touching = (
        ((d1 == 0) & _within_box(c, d, a))
        | ((d2 == 0) & _within_box(c, d, b))
        | ((d3 == 0) & _within_box(a, b, c))
        | ((d4 == 0) & _within_box(a, b, d))
    )
    return proper | touching


def is_simple(points: np.ndarray) -> bool:
    """Pairwise test of all non-adjacent edges of a closed vertex loop."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 4:
        return True
    start, end = _prev(pts), pts
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    hits = segments_intersect(start[i], end[i], start[j], end[j])
    return not bool(np.any(hits))


def class_and_heights_from_vertices(vertices) -> tuple[PolygonClass, Polygon]:
    pts = np.asarray(vertices, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError(f"expected a list of at least 3 points, got shape {pts.shape}")

    d = pts - _prev(pts)
    lengths = np.hypot(d[:, 0], d[:, 1])
    scale = max(float(np.max(np.abs(pts))), 1.0)
    if np.any(lengths <= 1e-14 * scale):
        raise ZeroEdge(f"edge {int(np.argmin(lengths))} has zero length")
    if not is_simple(pts):
        raise NonSimple("vertex list describes a self-intersecting curve")
    if signed_area(pts) <= 0:
        raise NotCCW("vertices must be listed counterclockwise")

    t = d / lengths[:, None]
    normals = np.column_stack([t[:, 1], -t[:, 0]])
    pclass = class_from_normals(np.arctan2(normals[:, 1], normals[:, 0]))
    h = np.einsum("ij,ij->i", pts, pclass.normals)
    logger.debug(f"Ingested {len(pts)}-gon, heights {np.array2string(h, precision=4)}")
    return pclass, Polygon(pclass, h)


def require_same_class(p: Polygon, q: Polygon) -> None:
    if not p.pclass.matches(q.pclass):
        raise ClassMismatch("polygons belong to different normal classes")


def distance(p: Polygon, q: Polygon) -> float:
    require_same_class(p, q)
    return float(np.max(np.abs(p.h - q.h)))


def interpolate(p0: Polygon, p1: Polygon, theta: float) -> Polygon:
    require_same_class(p0, p1)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    return Polygon(p0.pclass, (1.0 - theta) * p0.h + theta * p1.h)


def validate(p: Polygon, min_edge: float = 0.0) -> ValidityReport:
    lengths = p.edge_lengths()
    sigma = float(np.min(lengths))
    return ValidityReport(
        sigma=sigma,
        edges_positive=bool(np.all(lengths > min_edge)),
        simple=is_simple(p.vertices()),
        rho_lower=max(sigma, 0.0) / p.pclass.c_star,
    )


def contains_point(p: Polygon, point: Sequence[float]) -> bool:
    """Crossing-number point-in-polygon test."""
    x, y = float(point[0]), float(point[1])
    v = p.vertices()
    v0, v1 = v, _next(v)
    crosses = (v0[:, 1] <= y) != (v1[:, 1] <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = (y - v0[:, 1]) / (v1[:, 1] - v0[:, 1])
        x_hit = v0[:, 0] + frac * (v1[:, 0] - v0[:, 0])
    return bool(np.count_nonzero(crosses & (x < x_hit)) % 2)


def polygon_from_json(data: Any) -> Polygon:
    """Accept either a CCW vertex list or ``{"normal_angles", "heights"}``."""
    if isinstance(data, dict):
        missing = {"normal_angles", "heights"} - set(data)
        if missing:
            raise KeyError(f"missing keys {sorted(missing)}")
        return class_from_normals(data["normal_angles"]).polygon(data["heights"])
    _, polygon = class_and_heights_from_vertices(data)
    return polygon
