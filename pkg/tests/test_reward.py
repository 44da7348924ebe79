"""
Tests for the shaped reward (reward.py).

Golden vectors are evaluated by hand term by term:
r_latency, r_cost, r_sla, r_proactive, r_pareto, then the clipped total.
"""

import itertools

import numpy as np
import pytest

from pipescale.actions import ScalingAction, StageDelta
from pipescale.cost import cost
from pipescale.pareto import ParetoFrontier, hypervolume, hypervolume_contribution, pareto_reward
from pipescale.reward import (
    RewardBreakdown,
    RewardConfig,
    compute_reward,
    score_transition,
    sla_penalty,
)
from pipescale.simulator import PipelineSimulator, ResourceConfig, StageSpec
from pipescale.utils import ConfigurationError
from pipescale.workload import WorkloadPattern

NOOP = ScalingAction(
    (
        StageDelta("preprocessing", "cpu"),
        StageDelta("inference", "gpu"),
        StageDelta("postprocessing", "cpu"),
    )
)
ADD_PRE = ScalingAction(
    (
        StageDelta("preprocessing", "cpu", dn=1),
        StageDelta("inference", "gpu"),
        StageDelta("postprocessing", "cpu"),
    )
)
MULTI = ScalingAction(
    (
        StageDelta("preprocessing", "cpu", dn=1, dc=500),
        StageDelta("inference", "gpu", drho=0.2),
        StageDelta("postprocessing", "cpu", dm=256),
    )
)


def _exact(breakdown, **expected):
    for name, value in expected.items():
        assert getattr(breakdown, name) == pytest.approx(value, rel=1e-9, abs=1e-12), name


class TestRewardConfig:
    """Test configuration validation and normalizers."""

    def test_default_latency_normalizer(self):
        """Test that l_baseline defaults to 4 x SLA."""
        assert RewardConfig(c_budget=1.0).latency_normalizer == pytest.approx(2000.0)

    def test_frontier_normalizers(self):
        """Test that a new frontier uses l_baseline and c_budget."""
        frontier = RewardConfig(c_budget=2.5, l_baseline=800.0).new_frontier()
        assert (frontier.l_max, frontier.c_max) == (800.0, 2.5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"c_budget": 0.0},
            {"c_budget": 1.0, "sla_ms": 0.0},
            {"c_budget": 1.0, "l_baseline": -1.0},
            {"c_budget": 1.0, "sla_penalty": "cubic"},
        ],
    )
    def test_invalid(self, kwargs):
        """Test that zero normalizers and unknown penalties are rejected."""
        with pytest.raises(ConfigurationError):
            RewardConfig(**kwargs)


class TestSlaPenalty:
    """Test the SLA term."""

    def test_double_sla(self):
        """Test that twice the SLA gives -3."""
        assert sla_penalty(1000.0, RewardConfig(c_budget=1.0)) == pytest.approx(-3.0)

    def test_at_boundary(self):
        """Test that latency equal to the SLA is not penalized."""
        assert sla_penalty(500.0, RewardConfig(c_budget=1.0)) == 0.0

    def test_continuity(self):
        """Test that the penalty approaches zero just above the SLA."""
        assert sla_penalty(500.0001, RewardConfig(c_budget=1.0)) == pytest.approx(0.0, abs=1e-6)

    def test_linear_variant(self):
        """Test the linear penalty."""
        config = RewardConfig(c_budget=1.0, sla_penalty="linear")
        assert sla_penalty(750.0, config) == pytest.approx(-0.5)


class TestGoldenVectors:
    """Test hand-evaluated reward traces."""

    def test_dominated_improvement(self):
        """Test latency 400 -> 300 ms with a dominated operating point."""
        config = RewardConfig(c_budget=10.0, sla_ms=500.0, l_baseline=400.0)
        frontier = ParetoFrontier(400.0, 10.0, ((0.25, 0.12),))
        r = score_transition(400.0, 300.0, 1.0, 1.2, ADD_PRE, frontier, config)
        _exact(
            r,
            r_latency=0.175,
            r_cost=-0.006,
            r_sla=0.0,
            r_proactive=0.0,
            r_pareto=0.8 / 1.5,
            total=0.175 - 0.006 + 0.8 / 1.5,
        )
        assert r.point == pytest.approx((0.75, 0.12))
        assert not r.non_dominated
        assert not r.clipped

    def test_sla_violation_with_proactive_bonus(self):
        """Test a scale-up taken under 2x SLA pressure, first frontier point."""
        config = RewardConfig(c_budget=1.0)
        frontier = config.new_frontier()
        r = score_transition(1000.0, 1000.0, 0.1, 0.1, ADD_PRE, frontier, config)
        _exact(
            r,
            r_latency=0.0,
            r_cost=0.0,
            r_sla=-3.0,
            r_proactive=0.45,
            r_pareto=1.45,
            total=-1.1,
        )
        assert r.non_dominated

    def test_noop_unchanged_state(self):
        """Test that a no-op at an existing frontier point earns exactly r_pareto = 1."""
        config = RewardConfig(c_budget=1.0)
        frontier = ParetoFrontier(2000.0, 1.0, ((0.1, 0.5),))
        r = score_transition(200.0, 200.0, 0.5, 0.5, NOOP, frontier, config)
        _exact(r, r_latency=0.0, r_cost=0.0, r_sla=0.0, r_proactive=0.0, r_pareto=1.0, total=1.0)

    def test_multi_stage(self):
        """Test an action touching every stage under mild SLA pressure."""
        config = RewardConfig(c_budget=1.0)
        frontier = ParetoFrontier(2000.0, 1.0, ((0.1, 0.5), (0.5, 0.1)))
        r = score_transition(750.0, 400.0, 0.2, 0.3, MULTI, frontier, config)
        # mu = 1 + 0.5 * (1 + 1 + 0.2) + 0.5 * 3 = 3.6; sigma = 0.5
        _exact(
            r,
            r_latency=0.1225,
            r_cost=-0.03,
            r_sla=0.0,
            r_proactive=0.54,
            r_pareto=1.06,
            total=1.6925,
        )

    def test_clipped(self):
        """Test that a 3x SLA violation clips the total at -R_max."""
        config = RewardConfig(c_budget=1.0)
        r = score_transition(1500.0, 1500.0, 0.5, 0.5, NOOP, config.new_frontier(), config)
        _exact(r, r_sla=-8.0, r_pareto=1.125, total=-5.0)
        assert r.clipped

    def test_bonus_disabled(self):
        """Test that disabling the proactive bonus zeroes r_proactive."""
        config = RewardConfig(c_budget=1.0, proactive_bonus=False)
        r = score_transition(1000.0, 1000.0, 0.1, 0.1, ADD_PRE, config.new_frontier(), config)
        assert r.r_proactive == 0.0

    def test_frontier_not_updated(self):
        """Test that scoring reads the frontier without changing it."""
        config = RewardConfig(c_budget=1.0)
        frontier = config.new_frontier()
        score_transition(100.0, 100.0, 0.1, 0.1, NOOP, frontier, config)
        assert len(frontier) == 0


class TestComputeReward:
    """Test reward computation from pipeline states."""

    def test_costs_from_states(self):
        """Test that compute_reward prices each state for one interval."""
        spec = StageSpec(id=1, kind="cpu", base_service_rate=10.0)
        before = PipelineSimulator([spec], [ResourceConfig()], WorkloadPattern()).observe()
        after = PipelineSimulator([spec], [ResourceConfig(replicas=2)], WorkloadPattern()).observe()
        config = RewardConfig(c_budget=0.01)
        action = ScalingAction((StageDelta("stage_1", "cpu", dn=1),))
        frontier = config.new_frontier()
        r = compute_reward(before, after, action, frontier, config)
        expected = score_transition(
            before.p99_ms,
            after.p99_ms,
            cost(before, config.cost_model, 30.0),
            cost(after, config.cost_model, 30.0),
            action,
            frontier,
            config,
        )
        assert r == expected
        assert r.r_cost == pytest.approx(-0.3 * 0.0004 / 0.01)


class TestProperties:
    """Test reward invariants on random inputs."""

    def test_pareto_separation(self):
        """Test that non-dominated points beat dominated ones by at least 0.2."""
        rng = np.random.default_rng(5)
        for _ in range(200):
            frontier = ParetoFrontier(1.0, 1.0)
            for p in rng.uniform(0, 1, size=(int(rng.integers(1, 6)), 2)):
                frontier = frontier.insert((float(p[0]), float(p[1])))
            free, dominated = [], []
            for p in rng.uniform(0, 1, size=(20, 2)):
                point = (float(p[0]), float(p[1]))
                (dominated if frontier.is_dominated(point) else free).append(point)
            for a, b in itertools.product(free, dominated):
                assert pareto_reward(frontier, a) - pareto_reward(frontier, b) >= 0.2 - 1e-12

    def test_total_bounded(self):
        """Test that |total| never exceeds R_max."""
        rng = np.random.default_rng(6)
        config = RewardConfig(c_budget=1.0)
        for _ in range(200):
            before, after = rng.uniform(0, 5000, size=2)
            c0, c1 = rng.uniform(0, 3, size=2)
            r = score_transition(
                float(before),
                float(after),
                float(c0),
                float(c1),
                MULTI,
                config.new_frontier(),
                config,
            )
            assert abs(r.total) <= config.r_max
            assert 0.0 <= r.r_pareto <= 2.0

    def test_hypervolume_additivity(self):
        """Test that sequential contributions sum to the final hypervolume in any order."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            points = [(float(x), float(y)) for x, y in rng.uniform(0, 1, size=(6, 2))]
            for order in (points, points[::-1]):
                frontier = ParetoFrontier(1.0, 1.0)
                total = 0.0
                for p in order:
                    if not frontier.is_dominated(p):
                        total += hypervolume_contribution(frontier, p)
                    frontier = frontier.insert(p)
                assert total == pytest.approx(hypervolume(points), abs=1e-12)

    def test_breakdown_components(self):
        """Test the serialized component names."""
        config = RewardConfig(c_budget=1.0)
        r = score_transition(100.0, 100.0, 0.1, 0.1, NOOP, config.new_frontier(), config)
        assert set(RewardBreakdown.COMPONENTS) <= set(r.to_dict())
