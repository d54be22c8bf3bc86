"""Vector fields that drive the advected flow.

Every field is evaluated on arrays of points with shape ``(..., 2)``. Fields
are asserted divergence free by whoever builds them; the package only uses
the declared singular points to keep them off the polygon boundary.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np


def _as_point(value: Sequence[float]) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"expected a 2d point, got {value!r}")
    arr.setflags(write=False)
    return arr


class VectorField(ABC):
    name: str = "field"

    @property
    def singular_points(self) -> np.ndarray:
        return np.empty((0, 2))

    @abstractmethod
    def __call__(self, x: np.ndarray) -> np.ndarray: ...

    def exact_mean_flux(
        self, start: np.ndarray, end: np.ndarray, normal: np.ndarray
    ) -> np.ndarray | None:
        """Closed-form edge mean of u . n, or None when the field has none.

        Arguments are ``(k, 2)`` arrays of segment endpoints and unit normals.
        """
        return None

    def params(self) -> dict[str, Any]:
        return {}


@dataclass(frozen=True, eq=False)
class PointSource(VectorField):
    """u(x) = s (x - p) / |x - p|^2, a source of total flux 2 pi s at the pole p."""

    pole: np.ndarray = field(default_factory=lambda: np.zeros(2))
    strength: float = 1.0
    name: str = "point_source"

    def __post_init__(self):
        object.__setattr__(self, "pole", _as_point(self.pole))

    @property
    def singular_points(self) -> np.ndarray:
        return self.pole[None, :]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = np.asarray(x, dtype=float) - self.pole
        return self.strength * r / np.sum(r * r, axis=-1, keepdims=True)

    def exact_mean_flux(self, start, end, normal):
        # the flux of r/|r|^2 through a segment is the angle it subtends at the pole
        a = np.asarray(start, dtype=float) - self.pole
        b = np.asarray(end, dtype=float) - self.pole
        cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        dot = np.sum(a * b, axis=-1)
        length = np.hypot(*(b - a).T)
        return self.strength * np.arctan2(cross, dot) / length

    def params(self) -> dict[str, Any]:
        return {"pole": self.pole.tolist(), "strength": self.strength}


@dataclass(frozen=True, eq=False)
class Rotation(VectorField):
    """Rigid rotation with angular speed omega about center."""

    omega: float = 1.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    name: str = "rotation"

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = np.asarray(x, dtype=float) - self.center
        return self.omega * np.stack([-r[..., 1], r[..., 0]], axis=-1)

    def exact_mean_flux(self, start, end, normal):
        # linear field: the edge mean is the value at the midpoint
        mid = 0.5 * (np.asarray(start, dtype=float) + np.asarray(end, dtype=float))
        return np.sum(self(mid) * normal, axis=-1)

    def params(self) -> dict[str, Any]:
        return {"omega": self.omega, "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class Uniform(VectorField):
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    name: str = "uniform"

    def __post_init__(self):
        object.__setattr__(self, "velocity", _as_point(self.velocity))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.velocity, x.shape).copy()

    def exact_mean_flux(self, start, end, normal):
        return np.asarray(normal, dtype=float) @ self.velocity

    def params(self) -> dict[str, Any]:
        return {"velocity": self.velocity.tolist()}


@dataclass(frozen=True, eq=False)
class FunctionField(VectorField):
    """Wrap a plain callable ``(..., 2) -> (..., 2)``."""

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "function"
    poles: tuple[tuple[float, float], ...] = ()

    @property
    def singular_points(self) -> np.ndarray:
        return np.array(self.poles, dtype=float).reshape(-1, 2)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)


BUILTIN_FIELDS: dict[str, type[VectorField]] = {
    "point_source": PointSource,
    "rotation": Rotation,
    "uniform": Uniform,
}


def build_field(name: str, params: dict[str, Any] | None = None) -> VectorField:
    try:
        cls = BUILTIN_FIELDS[name]
    except KeyError:
        raise KeyError(f"unknown field {name!r}, expected one of {sorted(BUILTIN_FIELDS)}")
    return cls(**(params or {}))
