"""Run configuration: one JSON document per run or study.

``normalize`` checks a raw document and fills in defaults, ``RunConfig``
holds the result, and the ``build_*`` helpers turn it into the objects the
stepper works with.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from polyflow.errors import ConfigError, FlowError, GeometryError
from polyflow.fields import BUILTIN_FIELDS, build_field
from polyflow.flows import (
    DEFAULT_QUADRATURE_ORDER,
    AdvectedFlow,
    AreaPreservingCurvatureFlow,
    CurvatureFlow,
    VelocityLaw,
)
from polyflow.geometry import Polygon, polygon_from_json, validate
from polyflow.stepper import TIME_EPS, Scheme, SolverConfig

FLOWS = ("pcf", "ap_pcf", "advected")
EXACT_REFERENCES = ("self_similar_pcf",)
SNAPSHOT_DIR = "snapshots"
RUNS_DIR = "runs"

TOP_LEVEL_KEYS = {
    "initial",
    "flow",
    "field",
    "quadrature_order",
    "exact_flux",
    "area_rate",
    "mu",
    "scheme",
    "tau",
    "schedule",
    "t_end",
    "solver",
    "output",
    "convergence",
}
# config name -> SolverConfig attribute
SOLVER_KEYS = {
    "lambda": "lam",
    "fp_tolerance": "fp_tolerance",
    "fp_max_iterations": "fp_max_iterations",
    "min_edge": "min_edge",
    "max_step_halvings": "max_step_halvings",
    "max_steps": "max_steps",
    "predictor": "predictor",
}
SOLVER_DEFAULTS = {
    "lambda": 0.5,
    "fp_tolerance": 1e-13,
    "fp_max_iterations": 100,
    "min_edge": 1e-8,
    "max_step_halvings": 8,
    "max_steps": 1_000_000,
    "predictor": False,
}
OUTPUT_DEFAULTS = {"snapshot_every": 10, "viewport": "initial"}
CONVERGENCE_KEYS = {"taus", "reference", "reference_scheme", "workers"}


def _reject_unknown(section: dict[str, Any], allowed, prefix: str = "") -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}{key}", "unknown key")


def _require_dict(value: Any, key: str) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError(key, f"expected an object, got {type(value).__name__}")
    return value


def _number(value: Any, key: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(key, "must be finite")
    if positive and value <= 0:
        raise ConfigError(key, f"must be positive, got {value:g}")
    return value


def _integer(value: Any, key: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(key, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _number_list(value: Any, key: str, positive: bool = False) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(key, "expected a non-empty list of numbers")
    return [_number(x, key, positive) for x in value]


def _normalize_initial(raw: Any) -> dict[str, Any]:
    initial = _require_dict(raw, "initial")
    sources = [k for k in ("vertices", "vertices_file", "normal_angles") if k in initial]
    if len(sources) != 1:
        raise ConfigError(
            "initial", "give exactly one of vertices, vertices_file or normal_angles+heights"
        )
    source = sources[0]
    if source == "vertices":
        _reject_unknown(initial, {"vertices"}, "initial.")
        points = initial["vertices"]
        if not isinstance(points, list) or not all(
            isinstance(pt, list) and len(pt) == 2 for pt in points
        ):
            raise ConfigError("initial.vertices", "expected a list of [x, y] pairs")
        return {"vertices": [[_number(x, "initial.vertices") for x in pt] for pt in points]}
    if source == "vertices_file":
        _reject_unknown(initial, {"vertices_file"}, "initial.")
        if not isinstance(initial["vertices_file"], str):
            raise ConfigError("initial.vertices_file", "expected a path")
        return {"vertices_file": initial["vertices_file"]}
    _reject_unknown(initial, {"normal_angles", "heights"}, "initial.")
    if "heights" not in initial:
        raise ConfigError("initial.heights", "required together with normal_angles")
    angles = _number_list(initial["normal_angles"], "initial.normal_angles")
    heights = _number_list(initial["heights"], "initial.heights")
    if len(angles) != len(heights):
        raise ConfigError("initial.heights", f"expected {len(angles)} heights, got {len(heights)}")
    return {"normal_angles": angles, "heights": heights}


def _normalize_flow(raw: dict[str, Any]) -> dict[str, Any]:
    flow = raw.get("flow")
    if flow not in FLOWS:
        raise ConfigError("flow", f"expected one of {list(FLOWS)}, got {flow!r}")
    out: dict[str, Any] = {"flow": flow}
    advected_only = ("field", "quadrature_order", "exact_flux", "mu")
    if flow != "advected":
        for key in advected_only:
            if key in raw:
                raise ConfigError(key, f"only valid for the advected flow, not {flow}")
    if flow != "ap_pcf" and "area_rate" in raw:
        raise ConfigError("area_rate", f"only valid for the ap_pcf flow, not {flow}")

    if flow == "ap_pcf":
        out["area_rate"] = _number(raw.get("area_rate", 0.0), "area_rate")
    elif flow == "advected":
        spec = _require_dict(raw.get("field"), "field")
        _reject_unknown(spec, {"name", "params"}, "field.")
        if spec.get("name") not in BUILTIN_FIELDS:
            raise ConfigError(
                "field.name", f"expected one of {sorted(BUILTIN_FIELDS)}, got {spec.get('name')!r}"
            )
        out["field"] = {"name": spec["name"], "params": dict(_require_dict(spec.get("params", {}), "field.params"))}
        out["quadrature_order"] = _integer(
            raw.get("quadrature_order", DEFAULT_QUADRATURE_ORDER), "quadrature_order", 1
        )
        exact = raw.get("exact_flux", False)
        if not isinstance(exact, bool):
            raise ConfigError("exact_flux", "expected true or false")
        out["exact_flux"] = exact
        mu = raw.get("mu")
        out["mu"] = None if mu is None else _number(mu, "mu")
    return out


def _normalize_steps(raw: dict[str, Any]) -> dict[str, Any]:
    scheme = raw.get("scheme", str(Scheme.MIDPOINT))
    if scheme not in {s.value for s in Scheme}:
        raise ConfigError("scheme", f"expected euler or midpoint, got {scheme!r}")
    if ("tau" in raw) == ("schedule" in raw):
        raise ConfigError("tau", "give exactly one of tau or schedule")
    out: dict[str, Any] = {"scheme": scheme}
    if "tau" in raw:
        out["tau"] = _number(raw["tau"], "tau", positive=True)
    else:
        out["schedule"] = _number_list(raw["schedule"], "schedule", positive=True)
    if "t_end" not in raw:
        raise ConfigError("t_end", "required")
    out["t_end"] = _number(raw["t_end"], "t_end", positive=True)
    if "schedule" in out:
        total = sum(out["schedule"])
        if total < out["t_end"] - TIME_EPS * max(1.0, out["t_end"]):
            raise ConfigError("schedule", f"steps add up to {total:g}, short of t_end={out['t_end']:g}")
    return out


def _normalize_solver(raw: Any) -> dict[str, Any]:
    solver = _require_dict(raw, "solver")
    _reject_unknown(solver, SOLVER_KEYS, "solver.")
    out = {**SOLVER_DEFAULTS, **solver}
    for key in ("lambda", "fp_tolerance", "min_edge"):
        out[key] = _number(out[key], f"solver.{key}")
    for key in ("fp_max_iterations", "max_steps"):
        out[key] = _integer(out[key], f"solver.{key}", 1)
    out["max_step_halvings"] = _integer(out["max_step_halvings"], "solver.max_step_halvings", 0)
    if not isinstance(out["predictor"], bool):
        raise ConfigError("solver.predictor", "expected true or false")
    return out


def _normalize_output(raw: Any) -> dict[str, Any]:
    output = _require_dict(raw, "output")
    _reject_unknown(output, OUTPUT_DEFAULTS, "output.")
    out = {**OUTPUT_DEFAULTS, **output}
    out["snapshot_every"] = _integer(out["snapshot_every"], "output.snapshot_every", 1)
    viewport = out["viewport"]
    if viewport != "initial":
        box = _number_list(viewport, "output.viewport") if isinstance(viewport, list) else None
        if box is None or len(box) != 4 or box[0] >= box[2] or box[1] >= box[3]:
            raise ConfigError("output.viewport", 'expected "initial" or [xmin, ymin, xmax, ymax]')
        out["viewport"] = box
    return out


def _normalize_convergence(raw: Any) -> dict[str, Any]:
    conv = _require_dict(raw, "convergence")
    _reject_unknown(conv, CONVERGENCE_KEYS, "convergence.")
    if "taus" not in conv:
        raise ConfigError("convergence.taus", "required")
    taus = _number_list(conv["taus"], "convergence.taus", positive=True)
    reference = _require_dict(conv.get("reference"), "convergence.reference")
    if set(reference) == {"tau"}:
        reference = {"tau": _number(reference["tau"], "convergence.reference.tau", positive=True)}
    elif set(reference) == {"exact"}:
        if reference["exact"] not in EXACT_REFERENCES:
            raise ConfigError(
                "convergence.reference.exact",
                f"expected one of {list(EXACT_REFERENCES)}, got {reference['exact']!r}",
            )
    else:
        raise ConfigError("convergence.reference", 'expected {"tau": ...} or {"exact": ...}')
    scheme = conv.get("reference_scheme", str(Scheme.MIDPOINT))
    if scheme not in {s.value for s in Scheme}:
        raise ConfigError("convergence.reference_scheme", f"unknown scheme {scheme!r}")
    return {
        "taus": taus,
        "reference": reference,
        "reference_scheme": scheme,
        "workers": _integer(conv.get("workers", 4), "convergence.workers", 1),
    }


def normalize(raw: Any) -> dict[str, Any]:
    """Validate a raw document and return it with every default filled in."""
    raw = _require_dict(raw, "<document>")
    _reject_unknown(raw, TOP_LEVEL_KEYS)
    if "initial" not in raw:
        raise ConfigError("initial", "required")
    doc: dict[str, Any] = {"initial": _normalize_initial(raw["initial"])}
    doc.update(_normalize_flow(raw))
    doc.update(_normalize_steps(raw))
    doc["solver"] = _normalize_solver(raw.get("solver", {}))
    doc["output"] = _normalize_output(raw.get("output", {}))
    if "convergence" in raw:
        doc["convergence"] = _normalize_convergence(raw["convergence"])
    return doc


@dataclass(frozen=True)
class RunConfig:
    initial: dict[str, Any]
    flow: str
    scheme: str
    t_end: float
    tau: float | None = None
    schedule: list[float] | None = None
    field: dict[str, Any] | None = None
    quadrature_order: int = DEFAULT_QUADRATURE_ORDER
    exact_flux: bool = False
    mu: float | None = None
    area_rate: float = 0.0
    solver: dict[str, Any] = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    output: dict[str, Any] = field(default_factory=lambda: dict(OUTPUT_DEFAULTS))
    convergence: dict[str, Any] | None = None
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, raw: Any, base_dir: Path = Path(".")) -> "RunConfig":
        doc = normalize(raw)
        file = doc["initial"].get("vertices_file")
        if file is not None and not (base_dir / file).is_file():
            raise ConfigError("initial.vertices_file", f"{base_dir / file} does not exist")
        return cls(**doc, base_dir=base_dir)

    def to_dict(self) -> dict[str, Any]:
        """The normalized document this config was built from."""
        doc: dict[str, Any] = {"initial": self.initial, "flow": self.flow}
        if self.flow == "ap_pcf":
            doc["area_rate"] = self.area_rate
        elif self.flow == "advected":
            doc.update(
                field=self.field,
                quadrature_order=self.quadrature_order,
                exact_flux=self.exact_flux,
                mu=self.mu,
            )
        doc["scheme"] = self.scheme
        if self.tau is not None:
            doc["tau"] = self.tau
        else:
            doc["schedule"] = self.schedule
        doc.update(t_end=self.t_end, solver=self.solver, output=self.output)
        if self.convergence is not None:
            doc["convergence"] = self.convergence
        return doc


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("<document>", f"{path} does not exist")
    except json.JSONDecodeError as e:
        raise ConfigError("<document>", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    return RunConfig.from_dict(raw, base_dir=path.parent)


def build_polygon(cfg: RunConfig) -> Polygon:
    initial = cfg.initial
    try:
        if "vertices_file" in initial:
            data = json.loads((cfg.base_dir / initial["vertices_file"]).read_text(encoding="utf-8"))
        elif "vertices" in initial:
            data = initial["vertices"]
        else:
            data = initial
        polygon = polygon_from_json(data)
    except (GeometryError, KeyError, ValueError) as e:
        raise ConfigError("initial", str(e))
    report = validate(polygon, cfg.solver["min_edge"])
    if not report.valid:
        raise ConfigError(
            "initial",
            f"polygon is not admissible (min edge {report.sigma:.3e}, simple={report.simple})",
        )
    return polygon


def build_law(cfg: RunConfig) -> VelocityLaw:
    if cfg.flow == "pcf":
        return CurvatureFlow()
    if cfg.flow == "ap_pcf":
        return AreaPreservingCurvatureFlow(area_rate=cfg.area_rate)
    try:
        u = build_field(cfg.field["name"], cfg.field["params"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError("field.params", str(e))
    return AdvectedFlow(u, cfg.quadrature_order, mu=cfg.mu, exact_flux=cfg.exact_flux)


def build_solver(cfg: RunConfig, tau: float | None = None, scheme: str | None = None) -> SolverConfig:
    """SolverConfig for the run, or for one step size of a study when ``tau`` is given."""
    solver = {SOLVER_KEYS[k]: v for k, v in cfg.solver.items()}
    if tau is not None:
        steps = {"tau": tau, "schedule": None}
    else:
        steps = {"tau": cfg.tau, "schedule": None if cfg.schedule is None else tuple(cfg.schedule)}
    return SolverConfig(scheme=Scheme(scheme or cfg.scheme), **steps, **solver)


def check_flow(cfg: RunConfig, p0: Polygon, law: VelocityLaw) -> None:
    """Evaluate the law once on the initial polygon so field errors surface as config errors."""
    try:
        law(p0, 0.0)
    except (FlowError, GeometryError) as e:
        raise ConfigError("field" if cfg.flow == "advected" else "initial", str(e))


def prepare_output_dir(out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / SNAPSHOT_DIR).mkdir(exist_ok=True)
    return out_dir
