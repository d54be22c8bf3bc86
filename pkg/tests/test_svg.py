import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from polyflow.errors import InvalidPolygon, RenderError
from polyflow.geometry import signed_area
from polyflow.svg import Viewport, path_data, render_svg

SVG = "{http://www.w3.org/2000/svg}"


def parse_path(d: str) -> np.ndarray:
    pairs = re.findall(r"([-+0-9.eE]+),([-+0-9.eE]+)", d)
    return np.array([[float(x), float(y)] for x, y in pairs])


def rendered_path(path) -> str:
    root = ET.parse(path).getroot()
    paths = list(root.iter(f"{SVG}path"))
    assert len(paths) == 1
    return paths[0].get("d")


def test_viewport_around_pads_the_bounding_box(unit_square):
    vp = Viewport.around(unit_square)
    assert (vp.xmin, vp.ymin, vp.xmax, vp.ymax) == pytest.approx((-0.65, -0.65, 0.65, 0.65))
    assert vp.view_box() == "-0.65 -0.65 1.3 1.3"


def test_empty_viewport_is_rejected():
    with pytest.raises(ValueError):
        Viewport(0.0, 0.0, 0.0, 1.0)


def test_path_data():
    assert path_data(np.array([[0, 0], [1, 0], [0, 1]])) == "M 0,0 L 1,0 L 0,1 Z"


def test_square_snapshot(unit_square, tmp_path):
    out = render_svg(unit_square, Viewport.around(unit_square), tmp_path / "square.svg", t=0.25)
    root = ET.parse(out).getroot()
    assert root.get("viewBox") == "-0.65 -0.65 1.3 1.3"

    d = rendered_path(out)
    assert d.startswith("M ")
    assert d.endswith("Z")
    assert d.count("L ") == 3
    np.testing.assert_allclose(parse_path(d), unit_square.vertices(), atol=1e-12)

    text = "".join(root.find(f"{SVG}text").itertext())
    assert "t = 0.25" in text
    assert "area = 1" in text


def test_reflex_polygon_keeps_orientation(l_hexagon, tmp_path):
    out = render_svg(l_hexagon, Viewport(-1, -1, 3, 3), tmp_path / "l.svg")
    d = rendered_path(out)
    assert d.count("L ") == 5
    assert signed_area(parse_path(d)) == pytest.approx(3.0)


def test_invalid_polygon_is_not_drawn(square_class, tmp_path):
    path = tmp_path / "bad.svg"
    bad = square_class.polygon([0.5, 0.5, -0.5, 0.5])
    with pytest.raises(InvalidPolygon):
        render_svg(bad, Viewport(-1, -1, 1, 1), path)
    assert not path.exists()


def test_unwritable_path(unit_square, tmp_path):
    with pytest.raises(RenderError):
        render_svg(unit_square, Viewport(-1, -1, 1, 1), tmp_path / "missing" / "x.svg")
