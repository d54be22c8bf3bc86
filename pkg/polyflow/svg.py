"""Standalone SVG snapshots of a polygon.

Path data is written in math coordinates; a ``scale(1,-1)`` group flips it
to screen orientation, so the viewBox spans ``(xmin, -ymax)`` to
``(xmax, -ymin)``.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import svgwrite

from polyflow.errors import InvalidPolygon, RenderError
from polyflow.geometry import Polygon, validate

STROKE = "#111"
FILL = "#9ecae1"
VERTEX = "#d62728"


@dataclass(frozen=True)
class Viewport:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"empty viewport {self}")

    @classmethod
    def around(cls, p: Polygon, pad: float = 0.15) -> "Viewport":
        """Bounding box of p grown by ``pad`` times its larger side."""
        v = p.vertices()
        lo, hi = v.min(axis=0), v.max(axis=0)
        margin = pad * float(np.max(hi - lo))
        return cls(lo[0] - margin, lo[1] - margin, hi[0] + margin, hi[1] + margin)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def view_box(self) -> str:
        return f"{self.xmin:.12g} {-self.ymax:.12g} {self.width:.12g} {self.height:.12g}"


def path_data(vertices: np.ndarray) -> str:
    """Closed path ``M .. L .. Z`` through the vertices, one segment per edge."""
    head, *rest = (f"{x:.12g},{y:.12g}" for x, y in vertices)
    return " ".join([f"M {head}", *(f"L {pt}" for pt in rest), "Z"])


def render_svg(
    p: Polygon, viewport: Viewport, path: Path, t: Optional[float] = None
) -> Path:
    report = validate(p)
    if not report.valid:
        raise InvalidPolygon(
            f"refusing to draw an invalid polygon (sigma={report.sigma:.3e}, simple={report.simple})"
        )
    vertices = p.vertices()
    size = max(viewport.width, viewport.height)
    stroke_width = 0.004 * size

    dwg = svgwrite.Drawing(str(path), profile="full", size=("600px", f"{600 * viewport.height / viewport.width:.0f}px"))
    dwg.attribs["viewBox"] = viewport.view_box()
    dwg.set_desc(desc=f"math coordinates, y up; vertices {np.round(vertices, 12).tolist()}")

    shape = dwg.g(id="polygon", transform="scale(1,-1)")
    shape.add(
        dwg.path(
            d=path_data(vertices),
            stroke=STROKE,
            fill=FILL,
            fill_opacity=0.6,
            stroke_width=stroke_width,
            stroke_linejoin="round",
        )
    )
    for x, y in vertices:
        shape.add(dwg.circle(center=(float(x), float(y)), r=2.5 * stroke_width, fill=VERTEX))
    dwg.add(shape)

    parts = [] if t is None else [f"t = {t:.6g}"]
    parts += [f"area = {p.area():.6g}", f"length = {p.total_length():.6g}"]
    dwg.add(
        dwg.text(
            "   ".join(parts),
            insert=(viewport.xmin + 0.02 * viewport.width, -viewport.ymax + 0.05 * viewport.height),
            font_size=0.035 * size,
            font_family="monospace",
            fill=STROKE,
        )
    )
    try:
        dwg.save(pretty=True)
    except OSError as e:
        raise RenderError(f"could not write {path}: {e}") from e
    return Path(path)
