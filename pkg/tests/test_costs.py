import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import zero_dynamics
from stackrl.costs import (
    DEFAULT_ROBOT_R,
    STATE_ONLY,
    DiscountSpec,
    StageCost,
    accumulate_episode,
    running_cost,
    stage_integral,
)
from stackrl.dynamics import Dynamics, integrate_step
from stackrl.envs import robot_dynamics
from stackrl.errors import ContractViolation

ROBOT = Dynamics(3, 2, robot_dynamics, "robot")
FROZEN_1D = zero_dynamics(1, 1)


class Trace:
    def __init__(self, delta, stages):
        self.stages = np.asarray(stages, dtype=float)
        self.times = delta * np.arange(len(stages))


class TestRunningCost:
    def test_zero_regressor(self):
        assert running_cost(StageCost((1,) * 5), np.zeros(3), np.zeros(2)) == 0.0

    def test_sum_of_squares(self):
        assert running_cost(StageCost((1,) * 5), np.ones(3), np.ones(2)) == 5.0

    def test_robot_default_weights(self):
        val = running_cost(StageCost(DEFAULT_ROBOT_R), np.array([1.0, 0, 0]), np.array([0.2, 0]))
        assert val == pytest.approx(10.004, abs=1e-12)

    def test_state_only(self):
        sc = StageCost((2.0, 3.0), STATE_ONLY)
        assert running_cost(sc, np.array([1.0, 1.0])) == 5.0

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolation):
            running_cost(StageCost((1,) * 5), np.zeros(3), np.zeros(3))
        with pytest.raises(ContractViolation):
            running_cost(StageCost((1,) * 5), np.zeros(3))

    def test_invalid_weights(self):
        with pytest.raises(ContractViolation):
            StageCost((1.0, 0.0))
        with pytest.raises(ContractViolation):
            StageCost((1.0, 1.0), "mixed")

    def test_batched(self):
        sc = StageCost((1.0, 2.0))
        x = np.array([[1.0], [2.0], [3.0]])
        np.testing.assert_allclose(running_cost(sc, x, np.array([1.0])), [3.0, 6.0, 11.0])


class TestStageIntegral:
    def test_constant_integrand(self):
        sc = StageCost((1.0, 1.0))
        x, u = np.array([1.5]), np.array([0.5])
        c = running_cost(sc, x, u)
        assert abs(stage_integral(FROZEN_1D, sc, x, u, 0.0, 0.1) - c * 0.1) < 1e-12

    def test_square_state(self):
        sc = StageCost((1.0,), STATE_ONLY)
        assert stage_integral(FROZEN_1D, sc, np.array([2.0]), np.array([0.0]), 0.0, 0.3) == pytest.approx(1.2)

    def test_discounted_unit_cost(self):
        sc = StageCost((1.0,), STATE_ONLY)
        val = stage_integral(FROZEN_1D, sc, np.array([1.0]), np.array([0.0]), 0.0, 1.0, gamma=1.0, substeps=1000)
        assert abs(val - (1 - math.exp(-1))) < 1e-6

    def test_additive_over_intervals(self):
        sc = StageCost(DEFAULT_ROBOT_R)
        x, u = np.array([0.8, -0.3, 0.5]), np.array([0.2, 1.0])
        delta, gamma = 0.1, 0.7
        whole = stage_integral(ROBOT, sc, x, u, 0.0, 2 * delta, gamma, substeps=20)
        mid = integrate_step(ROBOT, x, u, delta, substeps=10)
        parts = stage_integral(ROBOT, sc, x, u, 0.0, delta, gamma, 10) + stage_integral(
            ROBOT, sc, mid, u, delta, delta, gamma, 10
        )
        assert abs(whole - parts) < 1e-10

    def test_gamma_limit(self):
        sc = StageCost(DEFAULT_ROBOT_R)
        x, u = np.array([0.8, -0.3, 0.5]), np.array([0.2, 1.0])
        a = stage_integral(ROBOT, sc, x, u, 0.0, 0.1, 0.0)
        b = stage_integral(ROBOT, sc, x, u, 0.0, 0.1, 1e-8)
        assert abs(a - b) <= 1e-6 * abs(a)


class TestAccumulate:
    def test_single_interval(self):
        assert accumulate_episode(Trace(0.1, [3.0 * 0.1])) == pytest.approx(0.3)

    def test_zero_trace(self):
        assert accumulate_episode(Trace(0.1, [0.0, 0.0, 0.0])) == 0.0

    def test_two_intervals(self):
        assert accumulate_episode(Trace(0.1, [0.2, 0.5])) == pytest.approx(0.7)

    def test_episode_relative_discount(self):
        val = accumulate_episode(Trace(0.5, [1.0, 1.0]), gamma=2.0)
        assert val == pytest.approx(1.0 + math.exp(-1.0))

    def test_misaligned(self):
        bad = Trace(0.1, [1.0])
        bad.times = np.zeros(2)
        with pytest.raises(ContractViolation):
            accumulate_episode(bad)


def test_discount_spec():
    assert DiscountSpec(0.0).factor(1.0) == 1.0
    with pytest.raises(ContractViolation):
        DiscountSpec(-1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.lists(st.floats(-2, 2), min_size=5, max_size=5))
def test_scaling_r_scales_costs(lam, vals):
    sc = StageCost(DEFAULT_ROBOT_R)
    x, u = np.array(vals[:3]), np.array(vals[3:])
    base_r = running_cost(sc, x, u)
    base_i = stage_integral(ROBOT, sc, x, u, 0.0, 0.1, 0.3)
    assert math.isclose(running_cost(sc.scaled(lam), x, u), lam * base_r, rel_tol=1e-12, abs_tol=1e-300)
    assert math.isclose(stage_integral(ROBOT, sc.scaled(lam), x, u, 0.0, 0.1, 0.3), lam * base_i, rel_tol=1e-12, abs_tol=1e-300)
    stages = np.array([base_i, 2 * base_i])
    scaled = np.array([lam * base_i, 2 * lam * base_i])
    assert math.isclose(accumulate_episode(Trace(0.1, scaled)), lam * accumulate_episode(Trace(0.1, stages)), rel_tol=1e-12, abs_tol=1e-300)


@given(st.lists(st.floats(-1e3, 1e3), min_size=5, max_size=5))
def test_running_cost_nonnegative(vals):
    assert running_cost(StageCost(DEFAULT_ROBOT_R), np.array(vals[:3]), np.array(vals[3:])) >= 0.0
