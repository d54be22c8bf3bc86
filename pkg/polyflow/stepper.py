"""Time stepping for polygonal flows.

Two schemes advance the height vector: the explicit Euler scheme and the
implicit midpoint scheme, whose nonlinear step is solved by iterating the
contraction

    Lambda(S) = h^m + tau * F((Gamma^m + S) / 2, t_m + tau / 2)

starting from S = Gamma^m. Because edge lengths are linear in the heights,
a converged midpoint step changes the area by exactly tau * mu for any law
with constant area speed mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Callable, NamedTuple

import numpy as np
from loguru import logger

from polyflow.errors import (
    EDGE_COLLAPSE,
    LEFT_DOMAIN,
    SIMPLICITY_LOST,
    ConfigError,
    EdgeCollapse,
    FixedPointDivergence,
    FlowError,
    InvalidPolygon,
    MidpointInvalid,
    ResultInvalid,
    StepError,
)
from polyflow.flows import VelocityLaw
from polyflow.geometry import Polygon, distance, interpolate, require_same_class, validate
from polyflow.trajectory import StepRecord, Termination, Trajectory

DIVERGENCE_STREAK = 3
TIME_EPS = 1e-12


class Scheme(StrEnum):
    EULER = "euler"
    MIDPOINT = "midpoint"


@dataclass(frozen=True)
class SolverConfig:
    scheme: Scheme = Scheme.MIDPOINT
    tau: float | None = None
    schedule: tuple[float, ...] | None = None
    lam: float = 0.5
    fp_tolerance: float = 1e-13
    fp_max_iterations: int = 100
    min_edge: float = 1e-8
    max_step_halvings: int = 8
    max_steps: int = 1_000_000
    predictor: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, "scheme", Scheme(self.scheme))
        except ValueError:
            raise ConfigError("scheme", f"unknown scheme {self.scheme!r}")
        if (self.tau is None) == (self.schedule is None):
            raise ConfigError("tau", "give exactly one of a uniform step or a schedule")
        if self.tau is not None and not self.tau > 0:
            raise ConfigError("tau", f"step must be positive, got {self.tau}")
        if self.schedule is not None:
            object.__setattr__(self, "schedule", tuple(float(s) for s in self.schedule))
            if not self.schedule or min(self.schedule) <= 0:
                raise ConfigError("schedule", "steps must be a non-empty list of positive numbers")
        if not 0.0 < self.lam < 1.0:
            raise ConfigError("solver.lambda", f"must lie in (0, 1), got {self.lam}")
        if not self.fp_tolerance > 0:
            raise ConfigError("solver.fp_tolerance", "must be positive")
        if self.fp_max_iterations < 1:
            raise ConfigError("solver.fp_max_iterations", "must be at least 1")
        if self.min_edge < 0:
            raise ConfigError("solver.min_edge", "must be non-negative")
        if self.max_step_halvings < 0:
            raise ConfigError("solver.max_step_halvings", "must be non-negative")
        if self.max_steps < 1:
            raise ConfigError("solver.max_steps", "must be at least 1")

    def target_times(self, t_end: float, t0: float = 0.0) -> np.ndarray:
        """Grid times t_1 < t_2 < ... the run has to hit, ending at t_end."""
        if not t_end > t0:
            raise ConfigError("t_end", f"must be after the start time {t0:g}")
        if self.schedule is not None:
            eps = TIME_EPS * max(1.0, abs(t_end))
            cumulative = t0 + np.cumsum(self.schedule)
            if cumulative[-1] < t_end - eps:
                raise ConfigError(
                    "schedule", f"steps end at t={cumulative[-1]:g}, before t_end={t_end:g}"
                )
            return np.append(cumulative[cumulative < t_end - eps], t_end)
        count = max(1, math.ceil((t_end - t0) / self.tau - 1e-9))
        times = t0 + self.tau * np.arange(1, count + 1)
        times[-1] = t_end
        return times


class StepResult(NamedTuple):
    polygon: Polygon
    iterations: int


def _check(p: Polygon, min_edge: float, error: type[StepError], what: str) -> None:
    report = validate(p, min_edge)
    if not report.edges_positive:
        raise error(f"{what} has an edge of length {report.sigma:.3e}", EDGE_COLLAPSE)
    if not report.simple:
        raise error(f"{what} is not simple", SIMPLICITY_LOST)


def _speeds(law: VelocityLaw, p: Polygon, t: float, error: type[StepError], what: str) -> np.ndarray:
    try:
        return law(p, t)
    except EdgeCollapse as exc:
        raise error(f"law rejected the {what}: {exc}", EDGE_COLLAPSE) from exc
    except FlowError as exc:
        raise error(f"flow is undefined on the {what}: {exc}", LEFT_DOMAIN) from exc


def euler_step(
    p: Polygon,
    t: float,
    tau: float,
    law: VelocityLaw,
    min_edge: float = 0.0,
    speeds: np.ndarray | None = None,
) -> Polygon:
    """One explicit step; pass ``speeds`` = F(p, t) when they are already known."""
    if speeds is None:
        speeds = _speeds(law, p, t, ResultInvalid, "current polygon")
    q = p.with_heights(p.h + tau * speeds)
    _check(q, min_edge, ResultInvalid, "Euler update")
    return q


def lambda_map(
    candidate: Polygon,
    anchor: Polygon,
    t_mid: float,
    tau: float,
    law: VelocityLaw,
    min_edge: float = 0.0,
) -> Polygon:
    mid = interpolate(anchor, candidate, 0.5)
    _check(mid, min_edge, MidpointInvalid, "midpoint polygon")
    speeds = _speeds(law, mid, t_mid, MidpointInvalid, "midpoint polygon")
    return anchor.with_heights(anchor.h + tau * speeds)


def midpoint_step(
    p: Polygon,
    t: float,
    tau: float,
    law: VelocityLaw,
    cfg: SolverConfig,
    history: list[float] | None = None,
) -> StepResult:
    """Solve one implicit midpoint step by fixed-point iteration.

    Successive distances d(S^{nu+1}, S^nu) are appended to ``history`` when
    given. Raises FixedPointDivergence after three consecutive increases or
    when the iteration cap is reached.
    """
    t_mid = t + 0.5 * tau
    sigma = p
    if cfg.predictor:
        sigma = p.with_heights(p.h + tau * _speeds(law, p, t, MidpointInvalid, "current polygon"))
    distances: list[float] = []
    increases = 0
    try:
        for nu in range(1, cfg.fp_max_iterations + 1):
            nxt = lambda_map(sigma, p, t_mid, tau, law, cfg.min_edge)
            d = distance(nxt, sigma)
            increases = increases + 1 if distances and d > distances[-1] else 0
            distances.append(d)
            sigma = nxt
            if d <= cfg.fp_tolerance:
                bound = cfg.lam / (1.0 - cfg.lam) * d
                logger.debug(
                    f"Fixed point at t={t:.6g} tau={tau:.3e}: {nu} iterations, "
                    f"last distance {d:.2e}, a posteriori bound {bound:.2e}"
                )
                return StepResult(nxt, nu)
            if increases >= DIVERGENCE_STREAK:
                raise FixedPointDivergence(
                    f"distances grew {DIVERGENCE_STREAK} times in a row at t={t:.6g}, "
                    f"tau={tau:.3e}",
                    distances,
                )
        raise FixedPointDivergence(
            f"no fixed point within {cfg.fp_max_iterations} iterations at t={t:.6g}, "
            f"tau={tau:.3e} (last distance {distances[-1]:.2e})",
            distances,
        )
    finally:
        if history is not None:
            history.extend(distances)


def discrete_area_rate(p: Polygon, q: Polygon, tau: float) -> tuple[float, float]:
    """Area difference quotient and the trapezoid sum it must equal."""
    require_same_class(p, q)
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    lhs = (q.area() - p.area()) / tau
    mean_lengths = 0.5 * (p.edge_lengths() + q.edge_lengths())
    rhs = float(mean_lengths @ (q.h - p.h)) / tau
    return lhs, rhs


def collapse_time(p: Polygon, speeds: np.ndarray) -> float:
    """First time an edge reaches zero if every edge kept its current rate."""
    lengths = p.edge_lengths()
    rates = p.pclass.edge_lengths_of(speeds)
    shrinking = rates < 0
    if not np.any(shrinking):
        return math.inf
    return float(np.min(lengths[shrinking] / -rates[shrinking]))


class _Accepted(NamedTuple):
    polygon: Polygon
    iterations: int
    speeds: np.ndarray


def _single_step(
    p: Polygon, t: float, tau: float, law: VelocityLaw, cfg: SolverConfig, speeds: np.ndarray
) -> _Accepted:
    """One step from p whose result the law can still be evaluated on."""
    if cfg.scheme is Scheme.EULER:
        q, iterations = euler_step(p, t, tau, law, cfg.min_edge, speeds), 0
    else:
        q, iterations = midpoint_step(p, t, tau, law, cfg)
        _check(q, cfg.min_edge, ResultInvalid, "midpoint update")
    return _Accepted(q, iterations, _speeds(law, q, t + tau, ResultInvalid, "updated polygon"))


def _termination_for(error: StepError, p: Polygon, speeds: np.ndarray, grid_step: float) -> Termination:
    reason = getattr(error, "reason", None)
    if reason == LEFT_DOMAIN:
        return Termination.LEFT_DOMAIN
    if collapse_time(p, speeds) <= grid_step:
        return Termination.EDGE_COLLAPSE
    return Termination(reason) if reason else Termination.FP_DIVERGENCE


def _record(q: Polygon, t: float, **audit) -> StepRecord:
    return StepRecord(
        t=t,
        h=np.array(q.h),
        area=q.area(),
        length=q.total_length(),
        min_edge=q.min_edge(),
        **audit,
    )


def run(
    p0: Polygon,
    law: VelocityLaw,
    cfg: SolverConfig,
    t_end: float,
    t0: float = 0.0,
    on_record: Callable[[StepRecord, Polygon], None] | None = None,
) -> Trajectory:
    report = validate(p0, cfg.min_edge)
    if not report.valid:
        raise InvalidPolygon(
            f"initial polygon is invalid (sigma={report.sigma:.3e}, simple={report.simple})"
        )
    mu = law.area_speed(p0.pclass)
    trajectory = Trajectory(
        pclass=p0.pclass,
        metadata={"scheme": str(cfg.scheme), "flow": law.describe(), "mu": mu, "t_end": t_end},
    )
    first = _record(p0, t0)
    trajectory.append(first)
    if on_record:
        on_record(first, p0)
    logger.info(
        f"Running {law.describe()} with {cfg.scheme} scheme on a {p0.n}-gon "
        f"from t={t0:g} to t={t_end:g}"
    )

    p, t, steps = p0, t0, 0
    try:
        speeds = _speeds(law, p0, t0, ResultInvalid, "initial polygon")
    except ResultInvalid as exc:
        trajectory.reason = Termination.LEFT_DOMAIN
        logger.warning(f"Terminated at t={t0:g} ({trajectory.reason}): {exc}")
        return trajectory

    for target in cfg.target_times(t_end, t0):
        eps = TIME_EPS * max(1.0, abs(target))
        grid_step = target - t
        smallest = grid_step / 2**cfg.max_step_halvings
        # a halved step stays halved until the grid time is reached
        halvings, warned = 0, 0
        while t < target - eps:
            if steps >= cfg.max_steps:
                trajectory.reason = Termination.STEP_BUDGET_EXHAUSTED
                logger.warning(f"Stopped at t={t:.6g} after {steps} steps")
                return trajectory
            if collapse_time(p, speeds) < smallest:
                trajectory.reason = Termination.EDGE_COLLAPSE
                logger.warning(
                    f"Terminated at t={t:.6g} ({trajectory.reason}): an edge vanishes "
                    f"within the smallest allowed step {smallest:.3e}"
                )
                return trajectory
            tau = min(grid_step / 2**halvings, target - t)
            try:
                q, iterations, q_speeds = _single_step(p, t, tau, law, cfg, speeds)
            except StepError as exc:
                logger.debug(f"Step t={t:.6g} tau={tau:.3e} rejected: {exc}")
                if halvings == cfg.max_step_halvings:
                    trajectory.reason = _termination_for(exc, p, speeds, grid_step)
                    logger.warning(f"Terminated at t={t:.6g} ({trajectory.reason}): {exc}")
                    return trajectory
                halvings += 1
                continue
            if halvings > warned:
                logger.warning(f"Accepted step at t={t:.6g} after {halvings} halvings (tau={tau:.3e})")
                warned = halvings
            t_next = target if target - (t + tau) <= eps else t + tau
            lhs, rhs = discrete_area_rate(p, q, tau)
            record = _record(
                q,
                t_next,
                area_rate=lhs,
                trapezoid_gap=lhs - rhs,
                cas_residual=None if mu is None else lhs - mu,
                fp_iters=iterations,
                halvings=halvings,
            )
            trajectory.append(record, tau)
            if on_record:
                on_record(record, q)
            p, t, speeds = q, t_next, q_speeds
            steps += 1
            logger.debug(
                f"t={t:.6g} area={record.area:.12g} sigma={record.min_edge:.3e} "
                f"iters={iterations}"
            )
    logger.info(f"Completed {steps} steps, final area {trajectory.final.area:.12g}")
    return trajectory
