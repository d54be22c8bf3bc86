import math

import numpy as np
import pytest

from conftest import random_polygon
from polyflow.errors import (
    ClassMismatch,
    ConfigError,
    FixedPointDivergence,
    InvalidPolygon,
    MidpointInvalid,
    ResultInvalid,
)
from polyflow.fields import PointSource
from polyflow.flows import (
    AdvectedFlow,
    AreaPreservingCurvatureFlow,
    CurvatureFlow,
    CustomLaw,
    lipschitz_probe,
)
from polyflow.geometry import contains_point, validate
from polyflow.stepper import (
    Scheme,
    SolverConfig,
    collapse_time,
    discrete_area_rate,
    euler_step,
    lambda_map,
    midpoint_step,
    run,
)
from polyflow.trajectory import Termination

ZERO = CustomLaw(lambda p, t: np.zeros(p.n), mu=0.0, name="zero")


def test_euler_step_on_square(unit_square):
    q = euler_step(unit_square, 0.0, 0.01, CurvatureFlow())
    np.testing.assert_allclose(q.h, 0.48)
    # exact flow gives sqrt(0.25 - 0.02)
    assert abs(q.h[0] - math.sqrt(0.23)) == pytest.approx(4.17e-4, abs=1e-6)


def test_euler_step_with_zero_law(l_hexagon):
    assert euler_step(l_hexagon, 0.0, 0.1, ZERO).h.tolist() == l_hexagon.h.tolist()


def test_euler_step_rejects_collapsed_result(unit_square):
    with pytest.raises(ResultInvalid) as info:
        euler_step(unit_square, 0.0, 0.3, CurvatureFlow())
    assert info.value.reason == "edge_collapse"


def test_lambda_map_with_zero_law(unit_square, rectangle):
    assert lambda_map(rectangle, unit_square, 0.0, 0.1, ZERO).h.tolist() == unit_square.h.tolist()


def test_lambda_map_uses_midpoint(unit_square, square_class):
    candidate = square_class.polygon(np.full(4, 0.3))
    q = lambda_map(candidate, unit_square, 0.0, 0.01, CurvatureFlow())
    # midpoint heights 0.4, so the speed is -1 / 0.4
    np.testing.assert_allclose(q.h, 0.5 - 0.01 / 0.4)


def test_lambda_map_rejects_invalid_midpoint(unit_square, square_class):
    candidate = square_class.polygon([0.5, 0.5, -2.0, 0.5])
    with pytest.raises(MidpointInvalid):
        lambda_map(candidate, unit_square, 0.0, 0.01, CurvatureFlow())


def test_midpoint_step_is_exact_for_shrinking_square(unit_square):
    cfg = SolverConfig(tau=0.01)
    q, iterations = midpoint_step(unit_square, 0.0, 0.01, CurvatureFlow(), cfg)
    np.testing.assert_allclose(q.h, math.sqrt(0.23), atol=1e-13)
    assert iterations > 1


def test_midpoint_fixed_point_solves_the_implicit_equation(rectangle):
    law = CurvatureFlow()
    cfg = SolverConfig(tau=0.01)
    q, _ = midpoint_step(rectangle, 0.0, 0.01, law, cfg)
    mid = rectangle.with_heights(0.5 * (rectangle.h + q.h))
    np.testing.assert_allclose(q.h, rectangle.h + 0.01 * law(mid), atol=1e-12)


def test_midpoint_step_at_stationary_point(unit_square):
    cfg = SolverConfig(tau=0.1)
    q, iterations = midpoint_step(unit_square, 0.0, 0.1, AreaPreservingCurvatureFlow(), cfg)
    assert iterations == 1
    np.testing.assert_allclose(q.h, unit_square.h, atol=1e-15)


def test_midpoint_iteration_contracts_geometrically(rectangle):
    cfg = SolverConfig(tau=0.01, fp_tolerance=1e-14)
    history: list[float] = []
    midpoint_step(rectangle, 0.0, 0.01, AreaPreservingCurvatureFlow(), cfg, history)
    ratios = [b / a for a, b in zip(history, history[1:]) if a > 1e-12]
    assert ratios
    assert max(ratios) <= cfg.lam + 0.05


@pytest.mark.parametrize("law", [CurvatureFlow(), AreaPreservingCurvatureFlow()], ids=["pcf", "ap_pcf"])
@pytest.mark.parametrize("tau_lip", [1.0, 0.5, 0.1])
def test_iteration_count_follows_the_contraction_rate(law, tau_lip, square_class, rng):
    p = square_class.polygon([0.7, 0.5, 0.7, 0.5])
    radius = 0.5 * validate(p).rho_lower
    # tau * L = 1 is the largest step with lambda = 1/2
    tau = tau_lip / lipschitz_probe(law, p, 0.0, radius, rng=rng)
    cfg = SolverConfig(tau=tau)
    history: list[float] = []
    _, iterations = midpoint_step(p, 0.0, tau, law, cfg, history)
    bound = math.ceil(math.log(cfg.fp_tolerance / history[0]) / math.log(cfg.lam)) + 1
    assert iterations <= bound


def test_predictor_converges_to_the_same_step(rectangle):
    law = AreaPreservingCurvatureFlow()
    plain, n_plain = midpoint_step(rectangle, 0.0, 0.01, law, SolverConfig(tau=0.01))
    predicted, n_pred = midpoint_step(rectangle, 0.0, 0.01, law, SolverConfig(tau=0.01, predictor=True))
    np.testing.assert_allclose(predicted.h, plain.h, atol=1e-12)
    assert n_pred <= n_plain


def test_midpoint_step_reports_divergence(unit_square):
    # a stiff linear law makes the iteration map expand
    law = CustomLaw(lambda p, t: -100.0 * (p.h - 0.5) + 0.001, name="stiff")
    history: list[float] = []
    with pytest.raises(FixedPointDivergence) as info:
        midpoint_step(unit_square, 0.0, 0.1, law, SolverConfig(tau=0.1), history)
    assert len(info.value.distances) == len(history)


def test_midpoint_step_respects_iteration_cap(rectangle):
    cfg = SolverConfig(tau=0.01, fp_max_iterations=2, fp_tolerance=1e-15)
    with pytest.raises(FixedPointDivergence):
        midpoint_step(rectangle, 0.0, 0.01, CurvatureFlow(), cfg)


class TestDiscreteAreaRate:
    def test_identical_polygons(self, rectangle):
        assert discrete_area_rate(rectangle, rectangle, 0.5) == (0.0, 0.0)

    def test_hand_example(self, unit_square, square_class):
        lhs, rhs = discrete_area_rate(unit_square, square_class.polygon(np.full(4, 0.6)), 1.0)
        assert lhs == pytest.approx(0.44)
        assert rhs == pytest.approx(0.44)

    def test_random_pairs(self, l_hexagon, rng):
        for _ in range(100):
            p, q = random_polygon(l_hexagon, rng), random_polygon(l_hexagon, rng)
            lhs, rhs = discrete_area_rate(p, q, 1.0)
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, p.area())

    def test_class_mismatch(self, unit_square, hexagon_class):
        with pytest.raises(ClassMismatch):
            discrete_area_rate(unit_square, hexagon_class.polygon(np.ones(6)), 0.1)


def test_length_rate_identity(l_hexagon, rng):
    v = rng.normal(size=l_hexagon.n)
    moved = l_hexagon.with_heights(l_hexagon.h + 0.01 * v)
    assert moved.total_length() - l_hexagon.total_length() == pytest.approx(
        0.01 * (l_hexagon.pclass.eta @ v), abs=1e-14
    )


def test_collapse_time(unit_square):
    # edges shrink at 4 per unit time from length 1
    assert collapse_time(unit_square, CurvatureFlow()(unit_square)) == pytest.approx(0.25)
    assert collapse_time(unit_square, np.ones(4)) == math.inf


class TestSolverConfig:
    def test_needs_exactly_one_step_source(self):
        with pytest.raises(ConfigError):
            SolverConfig()
        with pytest.raises(ConfigError):
            SolverConfig(tau=0.1, schedule=(0.1,))

    @pytest.mark.parametrize(
        "kwargs, key",
        [
            ({"lam": 1.0}, "solver.lambda"),
            ({"fp_tolerance": 0.0}, "solver.fp_tolerance"),
            ({"tau": -1.0}, "tau"),
            ({"scheme": "rk4"}, "scheme"),
        ],
    )
    def test_rejects_bad_values(self, kwargs, key):
        with pytest.raises(ConfigError) as info:
            SolverConfig(**{"tau": 0.1, **kwargs})
        assert info.value.key == key

    def test_uniform_grid_ends_at_t_end(self):
        times = SolverConfig(tau=0.3).target_times(1.0)
        np.testing.assert_allclose(times, [0.3, 0.6, 0.9, 1.0])
        np.testing.assert_allclose(SolverConfig(tau=0.1).target_times(0.3), [0.1, 0.2, 0.3])

    def test_schedule_grid(self):
        cfg = SolverConfig(schedule=(0.1, 0.2, 0.4))
        np.testing.assert_allclose(cfg.target_times(0.5), [0.1, 0.3, 0.5])
        np.testing.assert_allclose(cfg.target_times(0.7), [0.1, 0.3, 0.7])

    def test_schedule_must_reach_t_end(self):
        with pytest.raises(ConfigError) as info:
            SolverConfig(schedule=(0.1, 0.2, 0.4)).target_times(2.0)
        assert info.value.key == "schedule"


class TestRun:
    def test_square_curvature_flow_matches_closed_form(self, square_class):
        p0 = square_class.polygon(np.ones(4))
        traj = run(p0, CurvatureFlow(), SolverConfig(tau=1e-3), 0.4)
        assert traj.reason is Termination.COMPLETED
        assert traj.final.t == pytest.approx(0.4)
        np.testing.assert_allclose(traj.final.h, math.sqrt(0.2), atol=1e-6)

    def test_square_past_extinction_collapses(self, square_class):
        p0 = square_class.polygon(np.ones(4))
        traj = run(p0, CurvatureFlow(), SolverConfig(tau=1e-2), 0.6)
        assert traj.reason is Termination.EDGE_COLLAPSE
        assert traj.final.t < 0.5

    def test_halving_budget_is_spent_once_per_grid_step(self, square_class):
        p0 = square_class.polygon(np.ones(4))
        cfg = SolverConfig(tau=1e-2)
        traj = run(p0, CurvatureFlow(), cfg, 0.6)
        assert traj.reason is Termination.EDGE_COLLAPSE
        halved = [r.halvings for r in traj.records if r.halvings]
        # one accepted step per level on the way down to tau / 2**8
        assert halved == list(range(1, cfg.max_step_halvings + 1))
        assert 0.49 < traj.final.t < 0.5 - 1e-5
        # h^2 = 1 - 2t, so the last square still has h close to 0.0088
        assert traj.final.min_edge > 1e-2

    def test_euler_past_extinction_collapses(self, square_class):
        p0 = square_class.polygon(np.ones(4))
        traj = run(p0, CurvatureFlow(), SolverConfig(scheme=Scheme.EULER, tau=1e-2), 0.6)
        assert traj.reason is Termination.EDGE_COLLAPSE

    def test_records_are_audited(self, rectangle):
        traj = run(rectangle, AreaPreservingCurvatureFlow(), SolverConfig(tau=0.05), 0.5)
        assert len(traj) == 11
        assert np.all(np.diff(traj.times()) > 0)
        for record in traj.records[1:]:
            assert abs(record.cas_residual) <= 1e-10
            assert abs(record.trapezoid_gap) <= 1e-10
            assert record.fp_iters >= 1
        assert traj.records[0].speeds is not None
        assert traj.final.speeds is None
        assert traj.metadata["mu"] == 0.0

    def test_schedule_is_followed(self, rectangle):
        cfg = SolverConfig(schedule=(0.1, 0.05, 0.2))
        traj = run(rectangle, AreaPreservingCurvatureFlow(), cfg, 0.35)
        np.testing.assert_allclose(traj.times(), [0.0, 0.1, 0.15, 0.35])

    def test_step_budget(self, rectangle):
        cfg = SolverConfig(tau=0.01, max_steps=5)
        traj = run(rectangle, AreaPreservingCurvatureFlow(), cfg, 1.0)
        assert traj.reason is Termination.STEP_BUDGET_EXHAUSTED
        assert len(traj) == 6

    def test_halving_recovers_a_hard_step(self, unit_square):
        # the iteration contracts only once tau * 100 / 2 < 1
        relax = CustomLaw(lambda p, t: -100.0 * (p.h - 0.4), name="relax")
        traj = run(unit_square, relax, SolverConfig(tau=0.1), 0.2)
        assert traj.reason is Termination.COMPLETED
        # each grid step is covered by eight steps of 0.1 / 2**3
        assert len(traj) == 17
        assert {r.halvings for r in traj.records[1:]} == {3}
        assert traj.final.t == pytest.approx(0.2)
        np.testing.assert_allclose(traj.final.h, 0.4, atol=1e-3)
        assert traj.final.cas_residual is None

    def test_sink_crossed_by_an_edge_ends_the_run(self, hexagon_class):
        pole = np.array([0.6, 0.0])
        law = AdvectedFlow(PointSource(pole=pole, strength=-1.0), exact_flux=True)
        traj = run(hexagon_class.polygon(np.ones(6)), law, SolverConfig(tau=1e-3), 1.0)
        assert traj.reason is Termination.LEFT_DOMAIN
        assert len(traj) > 1
        assert traj.final.t < 1.0
        assert contains_point(traj.polygon(-1), pole)

    def test_law_failing_on_the_start_ends_the_run(self, hexagon_class):
        law = AdvectedFlow(PointSource(pole=[5.0, 0.0]))
        traj = run(hexagon_class.polygon(np.ones(6)), law, SolverConfig(tau=1e-3), 1.0)
        assert traj.reason is Termination.LEFT_DOMAIN
        assert len(traj) == 1

    def test_invalid_start_is_refused(self, square_class):
        with pytest.raises(InvalidPolygon):
            run(square_class.polygon([0.5, 0.5, -0.5, 0.5]), CurvatureFlow(), SolverConfig(tau=0.1), 1.0)

    def test_on_record_sees_every_record(self, rectangle):
        seen = []
        traj = run(
            rectangle,
            AreaPreservingCurvatureFlow(),
            SolverConfig(tau=0.1),
            0.3,
            on_record=lambda record, polygon: seen.append((record.t, polygon.area())),
        )
        assert [t for t, _ in seen] == traj.times().tolist()
