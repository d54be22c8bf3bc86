from pathlib import Path

import pandas as pd

from polyflow.trajectory import Trajectory

TRAJECTORY_NAME = "trajectory.jsonl"
SUMMARY_CSV_NAME = "summary.csv"
EOC_CSV_NAME = "eoc.csv"
SUMMARY_COLUMNS = ["t", "area", "length", "min_edge", "cas_residual"]


def summary_frame(trajectory: Trajectory) -> pd.DataFrame:
    """One row per record: time, area, length, smallest edge and area-speed residual."""
    rows = [
        {
            "t": r.t,
            "area": r.area,
            "length": r.length,
            "min_edge": r.min_edge,
            "cas_residual": r.cas_residual,
        }
        for r in trajectory.records
    ]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary_csv(trajectory: Trajectory, out_dir: Path) -> Path:
    path = Path(out_dir) / SUMMARY_CSV_NAME
    summary_frame(trajectory).to_csv(path, index=False, float_format="%.17g", na_rep="")
    return path


def write_eoc_csv(table: pd.DataFrame, out_dir: Path) -> Path:
    # the first order is undefined and stays an empty cell
    path = Path(out_dir) / EOC_CSV_NAME
    table[["tau", "error", "order"]].to_csv(path, index=False, float_format="%.17g", na_rep="")
    return path
