import json
from pathlib import Path

import numpy as np
import pytest

from polyflow.geometry import (
    Polygon,
    PolygonClass,
    class_and_heights_from_vertices,
    class_from_normals,
    regular_class,
    validate,
)

SQUARE_ANGLES = [0.0, np.pi / 2, np.pi, 3 * np.pi / 2]
# (0,0) (2,0) (2,1) (1,1) (1,2) (0,2): one reflex corner at (1,1)
L_HEXAGON = [[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]]
# a rectangle with a notch cut into its top edge, two reflex corners
NOTCHED_OCTAGON = [[0, 0], [3, 0], [3, 2], [2, 2], [2, 1], [1, 1], [1, 2], [0, 2]]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def square_class() -> PolygonClass:
    return class_from_normals(SQUARE_ANGLES)


@pytest.fixture
def unit_square(square_class) -> Polygon:
    return square_class.polygon([0.5, 0.5, 0.5, 0.5])


@pytest.fixture
def rectangle(square_class) -> Polygon:
    """Edges (1, 2, 1, 2), area 2."""
    return square_class.polygon([1.0, 0.5, 1.0, 0.5])


@pytest.fixture
def hexagon_class() -> PolygonClass:
    return regular_class(6)


@pytest.fixture
def l_hexagon() -> Polygon:
    _, polygon = class_and_heights_from_vertices(L_HEXAGON)
    return polygon


@pytest.fixture
def notched_octagon() -> Polygon:
    _, polygon = class_and_heights_from_vertices(NOTCHED_OCTAGON)
    return polygon


@pytest.fixture
def write_config(tmp_path):
    def write(doc, name="config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return path

    return write


def random_polygon(base: Polygon, rng: np.random.Generator, spread: float = 0.2) -> Polygon:
    """A valid member of base's class near base, found by rejection sampling."""
    scale = spread * base.min_edge()
    while True:
        q = base.with_heights(base.h + rng.uniform(-scale, scale, size=base.n))
        if validate(q).valid:
            return q


def square_config(**overrides) -> dict:
    doc = {
        "initial": {"normal_angles": SQUARE_ANGLES, "heights": [1.0, 1.0, 1.0, 1.0]},
        "flow": "pcf",
        "tau": 0.01,
        "t_end": 0.1,
    }
    doc.update(overrides)
    return doc
