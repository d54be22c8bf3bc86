"""Velocity laws: edge normal speeds F(polygon, t).

A law maps an N-polygon to N normal speeds, one per edge, positive
outward. Laws that keep the area speed sum_j |Gamma_j| F_j constant report
that constant through ``area_speed``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cache, cached_property
from typing import Callable, ClassVar

import numpy as np
from loguru import logger

from polyflow.errors import (
    GeometryViolation,
    InvalidBall,
    NoDeclaredMu,
    SingularFieldOnEdge,
)
from polyflow.fields import VectorField
from polyflow.geometry import Polygon, PolygonClass, contains_point, validate

DEFAULT_QUADRATURE_ORDER = 4
SINGULAR_TOL = 1e-9


class VelocityLaw(ABC):
    kind: ClassVar[str] = "custom"
    lipschitz: bool = True

    @abstractmethod
    def evaluate(self, p: Polygon, t: float) -> np.ndarray: ...

    def area_speed(self, pclass: PolygonClass) -> float | None:
        """The constant mu with sum_j |Gamma_j| F_j = mu, if the law has one."""
        return None

    def __call__(self, p: Polygon, t: float = 0.0) -> np.ndarray:
        speeds = np.asarray(self.evaluate(p, t), dtype=float)
        if speeds.shape != (p.n,):
            raise ValueError(
                f"{self.kind} law returned shape {speeds.shape} for a {p.n}-gon"
            )
        return speeds

    def describe(self) -> str:
        return self.kind


def eval_pcf(p: Polygon, min_edge: float = 0.0) -> np.ndarray:
    return -p.curvatures(min_edge)


def eval_ap_pcf(p: Polygon, area_rate: float = 0.0, min_edge: float = 0.0) -> np.ndarray:
    kappa = p.curvatures(min_edge)
    length = p.total_length()
    mean_kappa = float(np.sum(p.pclass.eta)) / length
    return mean_kappa - kappa + area_rate / length


@cache
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    if order < 1:
        raise ValueError(f"quadrature order must be positive, got {order}")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes, weights = 0.5 * (nodes + 1.0), 0.5 * weights
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _edge_segments(p: Polygon) -> tuple[np.ndarray, np.ndarray]:
    end = p.vertices()
    return np.roll(end, 1, axis=0), end


def _point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances, shape (len(points), len(a))."""
    d = b - a
    rel = points[:, None, :] - a[None, :, :]
    s = np.clip(np.sum(rel * d, axis=-1) / np.sum(d * d, axis=-1), 0.0, 1.0)
    closest = a[None, :, :] + s[..., None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - closest, axis=-1)


def _guard_singularities(u: VectorField, start: np.ndarray, end: np.ndarray, edges) -> None:
    poles = u.singular_points
    if len(poles) == 0:
        return
    dist = _point_segment_distance(poles, start, end)
    hit = np.argwhere(dist <= SINGULAR_TOL)
    if len(hit):
        k, j = hit[0]
        raise SingularFieldOnEdge(
            f"singular point {poles[k].tolist()} of {u.name} lies on edge {edges[j]}"
        )


def _mean_flux(
    u: VectorField,
    start: np.ndarray,
    end: np.ndarray,
    normals: np.ndarray,
    order: int,
    exact: bool = False,
) -> np.ndarray:
    if exact:
        closed_form = u.exact_mean_flux(start, end, normals)
        if closed_form is None:
            raise ValueError(f"field {u.name} has no closed-form edge flux")
        return np.asarray(closed_form, dtype=float)
    nodes, weights = gauss_legendre(order)
    points = start[:, None, :] + nodes[None, :, None] * (end - start)[:, None, :]
    mean_u = np.einsum("q,kqd->kd", weights, u(points))
    return np.sum(mean_u * normals, axis=-1)


def edge_average_flux(
    p: Polygon, j: int, u: VectorField, order: int = DEFAULT_QUADRATURE_ORDER
) -> float:
    """Edge mean of u . n_j over edge j by Gauss-Legendre quadrature."""
    j = j % p.n
    start, end = _edge_segments(p)
    start, end = start[j : j + 1], end[j : j + 1]
    _guard_singularities(u, start, end, [j])
    return float(_mean_flux(u, start, end, p.pclass.normals[j : j + 1], order)[0])


def eval_advected(
    p: Polygon,
    u: VectorField,
    order: int = DEFAULT_QUADRATURE_ORDER,
    exact: bool = False,
) -> np.ndarray:
    start, end = _edge_segments(p)
    _guard_singularities(u, start, end, range(p.n))
    for pole in u.singular_points:
        if not contains_point(p, pole):
            raise GeometryViolation(f"singular point {pole.tolist()} lies outside the polygon")
    return _mean_flux(u, start, end, p.pclass.normals, order, exact=exact)


def field_area_speed(u: VectorField, radius: float = 1e-3, order: int = 64) -> float:
    """Outward flux of u through small circles around its singular points."""
    nodes, weights = gauss_legendre(order)
    theta = 2 * np.pi * nodes
    ring = np.column_stack([np.cos(theta), np.sin(theta)])
    total = 0.0
    for pole in u.singular_points:
        values = u(pole + radius * ring)
        total += 2 * np.pi * radius * float(weights @ np.sum(values * ring, axis=-1))
    return total


@dataclass(frozen=True)
class CurvatureFlow(VelocityLaw):
    """V_j = -kappa_j."""

    kind: ClassVar[str] = "pcf"
    min_edge: float = 0.0

    def evaluate(self, p: Polygon, t: float) -> np.ndarray:
        return eval_pcf(p, self.min_edge)

    def area_speed(self, pclass: PolygonClass) -> float:
        return pclass.pcf_area_speed


@dataclass(frozen=True)
class AreaPreservingCurvatureFlow(VelocityLaw):
    """V_j = <kappa> - kappa_j + area_rate / |Gamma|.

    With the default ``area_rate = 0`` the enclosed area is preserved; any
    other value makes the area change at exactly that rate.
    """

    kind: ClassVar[str] = "ap_pcf"
    area_rate: float = 0.0
    min_edge: float = 0.0

    def evaluate(self, p: Polygon, t: float) -> np.ndarray:
        return eval_ap_pcf(p, self.area_rate, self.min_edge)

    def area_speed(self, pclass: PolygonClass) -> float:
        return self.area_rate

    def describe(self) -> str:
        return f"ap_pcf(area_rate={self.area_rate:g})" if self.area_rate else self.kind


@dataclass(frozen=True, eq=False)
class AdvectedFlow(VelocityLaw):
    """V_j = edge mean of u . n_j for a divergence-free field u."""

    kind: ClassVar[str] = "advected"
    field: VectorField
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER
    mu: float | None = None
    exact_flux: bool = False

    def evaluate(self, p: Polygon, t: float) -> np.ndarray:
        return eval_advected(p, self.field, self.quadrature_order, exact=self.exact_flux)

    @cached_property
    def _field_mu(self) -> float:
        mu = field_area_speed(self.field)
        logger.debug(f"Area speed of {self.field.name} from singular-point circles: {mu:.12g}")
        return mu

    def area_speed(self, pclass: PolygonClass) -> float:
        return self.mu if self.mu is not None else self._field_mu

    def describe(self) -> str:
        how = "exact" if self.exact_flux else f"gauss{self.quadrature_order}"
        return f"advected({self.field.name}, {how})"


@dataclass(frozen=True, eq=False)
class CustomLaw(VelocityLaw):
    """A user-supplied law ``func(polygon, t) -> speeds``.

    ``lipschitz`` records whether the author vouches for local Lipschitz
    continuity; the stepper relies on divergence detection either way.
    """

    kind: ClassVar[str] = "custom"
    func: Callable[[Polygon, float], np.ndarray]
    mu: float | None = None
    name: str = "custom"
    lipschitz: bool = True

    def evaluate(self, p: Polygon, t: float) -> np.ndarray:
        return self.func(p, t)

    def area_speed(self, pclass: PolygonClass) -> float | None:
        return self.mu

    def describe(self) -> str:
        return self.name


def cas_residual(law: VelocityLaw, p: Polygon, t: float = 0.0) -> float:
    mu = law.area_speed(p.pclass)
    if mu is None:
        raise NoDeclaredMu(f"{law.describe()} does not declare an area speed")
    return float(p.edge_lengths() @ law(p, t) - mu)


def _ball_sample(
    p: Polygon, radius: float, rng: np.random.Generator, min_edge: float
) -> Polygon:
    q = p.with_heights(p.h + rng.uniform(-radius, radius, size=p.n))
    report = validate(q, min_edge)
    if not report.valid:
        raise InvalidBall(
            f"sample at distance <= {radius:g} is invalid (sigma={report.sigma:.3e}, "
            f"simple={report.simple})"
        )
    return q


def lipschitz_probe(
    law: VelocityLaw,
    p: Polygon,
    t: float,
    radius: float,
    samples: int = 200,
    rng: np.random.Generator | None = None,
    min_edge: float = 0.0,
) -> float:
    """Largest sampled |F(a) - F(b)|_inf / d(a, b) over pairs in the ball around p.

    A lower bound on the local Lipschitz constant of the law.
    """
    rng = rng if rng is not None else np.random.default_rng()
    best = 0.0
    for k in range(samples):
        # every other pair is anchored at the centre
        a = p if k % 2 == 0 else _ball_sample(p, radius, rng, min_edge)
        b = _ball_sample(p, radius, rng, min_edge)
        d = float(np.max(np.abs(a.h - b.h)))
        if d == 0.0:
            continue
        best = max(best, float(np.max(np.abs(law(a, t) - law(b, t)))) / d)
    logger.debug(f"Lipschitz probe for {law.describe()}: L >= {best:.6g} ({samples} pairs)")
    return best


def speed_bound(
    law: VelocityLaw,
    p: Polygon,
    t: float,
    radius: float,
    samples: int = 200,
    rng: np.random.Generator | None = None,
    min_edge: float = 0.0,
) -> float:
    """Largest sampled |F|_inf over the ball around p."""
    rng = rng if rng is not None else np.random.default_rng()
    best = float(np.max(np.abs(law(p, t))))
    for _ in range(samples):
        q = _ball_sample(p, radius, rng, min_edge)
        best = max(best, float(np.max(np.abs(law(q, t)))))
    return best


def suggest_step(
    law: VelocityLaw,
    p: Polygon,
    t: float,
    radius: float,
    lam: float = 0.5,
    samples: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Step size min(radius / M, 2 lam / L) from sampled speed and Lipschitz bounds."""
    rng = rng if rng is not None else np.random.default_rng()
    lip = lipschitz_probe(law, p, t, radius, samples, rng)
    speed = speed_bound(law, p, t, radius, samples, rng)
    return step_from_bounds(radius, lam, lip, speed)


def step_from_bounds(radius: float, lam: float, lip: float, speed: float) -> float:
    bounds = [radius / speed if speed > 0 else np.inf, 2 * lam / lip if lip > 0 else np.inf]
    return float(min(bounds))
