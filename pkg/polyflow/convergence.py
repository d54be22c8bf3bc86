"""Experimental order of convergence (EOC) studies.

A study runs the same problem at several uniform step sizes, concurrently,
and measures the height max-norm error against an oracle on the grid times
each run shares with it. The oracle is either a closed-form solution or a
fine-step reference run.
"""

from __future__ import annotations

import asyncio
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from tqdm.asyncio import tqdm

from polyflow.errors import ReferenceUnavailable
from polyflow.flows import VelocityLaw
from polyflow.geometry import Polygon
from polyflow.stepper import Scheme, SolverConfig, run
from polyflow.trajectory import Termination, Trajectory

REFERENCE_REFINEMENT = 8
TIME_MATCH_TOL = 1e-9


class Oracle(Protocol):
    def __call__(self, t: float) -> np.ndarray: ...


@dataclass(frozen=True)
class SelfSimilarSolution:
    """h(t) = h0 * sqrt(1 - 2 c t) for a polygon whose curvatures are c * h0."""

    h0: np.ndarray
    rate: float

    @property
    def extinction_time(self) -> float:
        return 1.0 / (2.0 * self.rate)

    def __call__(self, t: float) -> np.ndarray:
        return self.h0 * math.sqrt(1.0 - 2.0 * self.rate * t)


def self_similar_pcf(p0: Polygon, rtol: float = 1e-9) -> SelfSimilarSolution:
    """Closed-form curvature flow of a polygon with kappa proportional to h."""
    if np.any(p0.h <= 0):
        raise ReferenceUnavailable("self-similar solution needs all heights positive")
    ratio = p0.curvatures() / p0.h
    if not np.allclose(ratio, ratio[0], rtol=rtol, atol=0.0):
        raise ReferenceUnavailable(
            "curvatures are not proportional to heights; no self-similar solution"
        )
    return SelfSimilarSolution(h0=np.array(p0.h), rate=float(ratio[0]))


class TrajectoryOracle:
    """Look up a reference trajectory at matching grid times (no interpolation)."""

    def __init__(self, reference: Trajectory, tol: float = TIME_MATCH_TOL):
        self.reference = reference
        self.times = reference.times()
        self.heights = reference.heights()
        self.tol = tol

    def __call__(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.times, t))
        for k in (i - 1, i):
            if 0 <= k < len(self.times) and abs(self.times[k] - t) <= self.tol * max(1.0, abs(t)):
                return self.heights[k]
        raise ReferenceUnavailable(f"reference run has no record at t={t:.12g}")


def max_error(trajectory: Trajectory, oracle: Oracle) -> float:
    """max over records of d(Gamma(t_m), Gamma^m), the height max-norm."""
    return float(
        max(np.max(np.abs(record.h - oracle(record.t))) for record in trajectory.records)
    )


def pairwise_orders(taus: Sequence[float], errors: Sequence[float]) -> list[float]:
    """log(e_{i-1} / e_i) / log(tau_{i-1} / tau_i); NaN for the first entry."""
    orders = [math.nan]
    for i in range(1, len(taus)):
        e0, e1 = errors[i - 1], errors[i]
        if e0 > 0 and e1 > 0 and taus[i - 1] != taus[i]:
            orders.append(math.log(e0 / e1) / math.log(taus[i - 1] / taus[i]))
        else:
            orders.append(math.nan)
    return orders


def eoc_table(taus: Sequence[float], runs: Sequence[Trajectory], oracle: Oracle) -> pd.DataFrame:
    errors = []
    for tau, trajectory in zip(taus, runs):
        if trajectory.reason is not Termination.COMPLETED:
            logger.warning(f"Run with tau={tau:g} ended early ({trajectory.reason})")
        errors.append(max_error(trajectory, oracle))
    return pd.DataFrame({"tau": list(taus), "error": errors, "order": pairwise_orders(taus, errors)})


async def _run_limited(
    semaphore: asyncio.Semaphore,
    p0: Polygon,
    law: VelocityLaw,
    cfg: SolverConfig,
    t_end: float,
) -> Trajectory:
    async with semaphore:
        return await asyncio.to_thread(run, p0, law, cfg, t_end)


async def sweep(
    p0: Polygon,
    law: VelocityLaw,
    configs: Sequence[SolverConfig],
    t_end: float,
    workers: int = 4,
    progress: bool = False,
) -> list[Trajectory]:
    """Run independent trajectories concurrently, results in input order."""
    semaphore = asyncio.Semaphore(workers)
    tasks = [_run_limited(semaphore, p0, law, cfg, t_end) for cfg in configs]
    return await tqdm.gather(*tasks, disable=not progress, desc="runs")


def run_file_name(tau: float, scheme: Scheme | str) -> str:
    return f"{scheme}_tau{tau:.3e}.jsonl"


def reference_config(base: SolverConfig, taus: Sequence[float], tau_ref: float, scheme: Scheme | str) -> SolverConfig:
    if tau_ref > min(taus) / REFERENCE_REFINEMENT:
        raise ReferenceUnavailable(
            f"reference step {tau_ref:g} must be at most min(taus)/{REFERENCE_REFINEMENT}"
        )
    return replace(base, tau=tau_ref, schedule=None, scheme=Scheme(scheme))


def check_reference(reference: Trajectory, t_end: float) -> TrajectoryOracle:
    if reference.reason is not Termination.COMPLETED or reference.final.t < t_end:
        raise ReferenceUnavailable(
            f"reference run ended at t={reference.final.t:g} ({reference.reason})"
        )
    return TrajectoryOracle(reference)


def eoc_study(
    p0: Polygon,
    law: VelocityLaw,
    base: SolverConfig,
    t_end: float,
    taus: Sequence[float],
    exact: Callable[[float], np.ndarray] | None = None,
    tau_ref: float | None = None,
    reference_scheme: Scheme | str = Scheme.MIDPOINT,
    workers: int = 4,
    progress: bool = False,
    runs_dir: Path | None = None,
) -> pd.DataFrame:
    """Errors and observed orders for each step size in ``taus``.

    Give either ``exact`` (a closed-form h(t)) or ``tau_ref`` for a reference run.
    With ``runs_dir`` every trajectory is also saved there as JSON lines.
    """
    if (exact is None) == (tau_ref is None):
        raise ReferenceUnavailable("give exactly one of an exact solution or a reference step")
    configs = [replace(base, tau=tau, schedule=None) for tau in taus]
    if tau_ref is not None:
        configs.append(reference_config(base, taus, tau_ref, reference_scheme))
    runs = asyncio.run(sweep(p0, law, configs, t_end, workers, progress))
    if runs_dir is not None:
        for cfg, trajectory in zip(configs, runs):
            trajectory.save(Path(runs_dir) / run_file_name(cfg.tau, cfg.scheme))
    oracle = exact if exact is not None else check_reference(runs.pop(), t_end)
    table = eoc_table(taus, runs, oracle)
    logger.info(f"EOC study ({base.scheme}):\n{table.to_string(index=False)}")
    return table
