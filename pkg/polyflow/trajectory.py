import json
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any, Optional

import numpy as np

from polyflow.geometry import Polygon, PolygonClass, class_from_normals


class Termination(StrEnum):
    COMPLETED = "completed"
    EDGE_COLLAPSE = "edge_collapse"
    SIMPLICITY_LOST = "simplicity_lost"
    LEFT_DOMAIN = "left_domain"
    FP_DIVERGENCE = "fp_divergence"
    STEP_BUDGET_EXHAUSTED = "step_budget_exhausted"


def _floats(values: Optional[np.ndarray]) -> Optional[list[float]]:
    return None if values is None else [float(x) for x in values]


@dataclass
class StepRecord:
    t: float
    h: np.ndarray
    area: float
    length: float
    min_edge: float
    # discrete velocity (h^{m+1} - h^m) / tau_m, known once the next step is accepted
    speeds: Optional[np.ndarray] = None
    # audits of the step that produced this record
    area_rate: Optional[float] = None
    trapezoid_gap: Optional[float] = None
    cas_residual: Optional[float] = None
    fp_iters: int = 0
    halvings: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "h": _floats(self.h),
            "area": self.area,
            "length": self.length,
            "min_edge": self.min_edge,
            "cas_residual": self.cas_residual,
            "fp_iters": self.fp_iters,
            "halvings": self.halvings,
            "area_rate": self.area_rate,
            "trapezoid_gap": self.trapezoid_gap,
            "V": _floats(self.speeds),
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "StepRecord":
        speeds = data.get("V")
        return cls(
            t=data["t"],
            h=np.array(data["h"], dtype=float),
            area=data["area"],
            length=data["length"],
            min_edge=data["min_edge"],
            speeds=None if speeds is None else np.array(speeds, dtype=float),
            area_rate=data.get("area_rate"),
            trapezoid_gap=data.get("trapezoid_gap"),
            cas_residual=data.get("cas_residual"),
            fp_iters=data.get("fp_iters", 0),
            halvings=data.get("halvings", 0),
        )


@dataclass
class Trajectory:
    pclass: PolygonClass
    records: list[StepRecord] = field(default_factory=list)
    reason: Termination = Termination.COMPLETED
    metadata: dict[str, Any] = field(default_factory=dict)

    def append(self, record: StepRecord, tau: Optional[float] = None) -> None:
        if self.records:
            last = self.records[-1]
            if record.t <= last.t:
                raise ValueError(f"record time {record.t} does not follow {last.t}")
            tau = tau if tau is not None else record.t - last.t
            last.speeds = (record.h - last.h) / tau
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final(self) -> StepRecord:
        return self.records[-1]

    def polygon(self, index: int = -1) -> Polygon:
        return Polygon(self.pclass, self.records[index].h)

    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.records])

    def heights(self) -> np.ndarray:
        return np.array([r.h for r in self.records])

    def areas(self) -> np.ndarray:
        return np.array([r.area for r in self.records])

    @staticmethod
    def meta_path(path: Path) -> Path:
        return path.with_name(f"{path.stem}.meta.json")

    def save(self, path: Path) -> None:
        """Write one JSON object per record, plus a sidecar with class and outcome."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for record in self.records:
                f.write(json.dumps(record.to_json()) + "\n")
        meta = {
            "normal_angles": self.pclass.normal_angles.tolist(),
            "reason": str(self.reason),
            **self.metadata,
        }
        with open(self.meta_path(path), "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2)

    @classmethod
    def load(cls, path: Path) -> "Trajectory":
        with open(cls.meta_path(path), encoding="utf-8") as f:
            meta = json.load(f)
        pclass = class_from_normals(meta.pop("normal_angles"))
        reason = Termination(meta.pop("reason", Termination.COMPLETED))
        records = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(StepRecord.from_json(json.loads(line)))
        return cls(pclass=pclass, records=records, reason=reason, metadata=meta)

    def __repr__(self) -> str:
        if not self.records:
            return f"Trajectory(n={self.pclass.n}, empty, reason={self.reason})"
        return (
            f"Trajectory(n={self.pclass.n}, records={len(self.records)}, "
            f"t=[{self.records[0].t:g}, {self.final.t:g}], reason={self.reason})"
        )
