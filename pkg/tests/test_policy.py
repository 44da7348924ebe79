"""
Tests for the decision step, the mock policy and exploration (policy.py).
"""

import math

import numpy as np
import pytest

from pipescale.actions import absolute_to_delta
from pipescale.experience import Experience, extract_features
from pipescale.policy import (
    Decision,
    ExplorationSchedule,
    MockPolicy,
    decide,
    mock_action,
    mock_policy,
    random_probe,
)
from pipescale.simulator import PipelineState, ResourceConfig, StageState
from pipescale.utils import ConfigurationError


def _stage(name, kind, util, *, replicas=1, rho=1.0, demand=0.5):
    capacity = 10.0 * replicas
    return StageState(
        stage_id=1,
        name=name,
        kind=kind,
        config=ResourceConfig(replicas=replicas, gpu_rate_ratio=rho),
        queue_depth=0,
        cpu_util=util if kind == "cpu" else 0.0,
        gpu_util_quota=util if kind == "gpu" else 0.0,
        gpu_util_actual=util * rho if kind == "gpu" else 0.0,
        processing_ms=100.0,
        queue_delay_ms=0.0,
        p99_ms=100.0,
        arrival_rate_rps=demand * capacity,
        capacity_rps=capacity,
        ready_replicas=replicas,
        cpu_usage_millicores=util * 1000.0,
        memory_usage_mb=512.0,
    )


def _state(pre=0.5, inf=0.5, post=0.5, *, p99=300.0, **kwargs):
    stages = (
        _stage("preprocessing", "cpu", pre, **kwargs.get("pre_kw", {})),
        _stage("inference", "gpu", inf, **kwargs.get("inf_kw", {})),
        _stage("postprocessing", "cpu", post, **kwargs.get("post_kw", {})),
    )
    return PipelineState(
        stages=stages, p99_ms=p99, mean_latency_ms=p99 / 2, throughput_rps=10.0, t=0.0
    )


class RaisingPolicy:
    name = "broken"

    def propose(self, state, experiences):
        raise TimeoutError("deadline exceeded")


class ListPolicy:
    name = "list"

    def propose(self, state, experiences):
        return ["scale", "up"]


class TestExplorationSchedule:
    """Test geometric epsilon decay."""

    def test_defaults(self):
        """Test the initial probability."""
        assert ExplorationSchedule().epsilon == pytest.approx(0.15)

    def test_decay_to_floor(self):
        """Test that epsilon decays geometrically and stops at the floor."""
        schedule = ExplorationSchedule()
        assert schedule.decay() == pytest.approx(0.15 * 0.95)
        for _ in range(100):
            schedule.decay()
        assert schedule.epsilon == pytest.approx(0.05)

    def test_rounds_to_floor(self):
        """Test the number of decays needed to reach the floor."""
        schedule = ExplorationSchedule()
        n = schedule.decays_to_floor()
        assert n == math.ceil(math.log(1 / 3) / math.log(0.95))
        for _ in range(n - 1):
            schedule.decay()
        assert schedule.epsilon > 0.05
        assert schedule.decay() == pytest.approx(0.05)

    def test_fixed(self):
        """Test a constant schedule."""
        schedule = ExplorationSchedule.fixed(0.5)
        schedule.decay()
        assert schedule.epsilon == 0.5
        with pytest.raises(ValueError):
            ExplorationSchedule(epsilon_0=0.5, decay_rate=1.0, epsilon_min=0.1).decays_to_floor()

    @pytest.mark.parametrize(
        "kwargs",
        [{"epsilon_0": 1.5}, {"epsilon_min": 0.2}, {"decay_rate": 0.0}, {"decay_rate": 1.1}],
    )
    def test_invalid(self, kwargs):
        """Test parameter validation."""
        with pytest.raises(ConfigurationError):
            ExplorationSchedule(**kwargs)


class TestRandomProbe:
    """Test random single-stage probes."""

    def test_single_stage_on_grid(self):
        """Test that probes change exactly one stage on the grid."""
        rng = np.random.default_rng(0)
        state = _state()
        for _ in range(200):
            probe = random_probe(state, rng)
            assert probe.stages_scaled == 1
            assert probe.on_grid()

    def test_uniform_over_stages(self):
        """Test that each stage is probed about a third of the time."""
        rng = np.random.default_rng(1)
        state = _state()
        counts = {name: 0 for name in state.stage_names}
        for _ in range(3000):
            probe = random_probe(state, rng)
            counts[next(d.name for d in probe.stages if not d.is_noop)] += 1
        for count in counts.values():
            assert count / 3000 == pytest.approx(1 / 3, abs=0.04)


class TestMockPolicy:
    """Test the deterministic heuristic."""

    def test_scales_hot_cpu_stage(self):
        """Test that a hot CPU stage gains a replica."""
        action = mock_action(_state(pre=0.95))
        assert action.stage("preprocessing").dn == 1
        assert action.stages_scaled == 1

    def test_gpu_rate_before_replicas(self):
        """Test that a throttled GPU stage gets rate before replicas."""
        action = mock_action(_state(inf=0.9, inf_kw={"rho": 0.6}))
        assert action.stage("inference").drho == pytest.approx(0.1)
        assert action.stage("inference").dn == 0

    def test_gpu_replica_at_full_rate(self):
        """Test that a full-rate GPU stage gains a replica."""
        action = mock_action(_state(inf=0.9))
        assert action.stage("inference").dn == 1

    def test_cpu_at_max_replicas_gets_cpu(self):
        """Test that a CPU stage at max replicas is resized."""
        action = mock_action(_state(post=0.9, post_kw={"replicas": 8}))
        assert action.stage("postprocessing").dc == 500

    def test_sla_violation_triggers_scale_up(self):
        """Test that P99 above the SLA scales the busiest stage."""
        action = mock_action(_state(pre=0.4, inf=0.6, post=0.5, p99=800.0), sla_ms=500.0)
        assert action.stage("inference").dn == 1

    def test_tie_broken_by_demand(self):
        """Test that equal utilization falls back to demand ratio."""
        state = _state(pre=1.0, post=1.0, pre_kw={"demand": 1.1}, post_kw={"demand": 1.3})
        assert mock_action(state).stage("postprocessing").dn == 1

    def test_scale_down_when_idle(self):
        """Test that an idle pipeline shrinks its least-utilized stage."""
        state = _state(
            pre=0.2, inf=0.1, post=0.05, p99=100.0, pre_kw={"replicas": 3}, post_kw={"replicas": 2}
        )
        assert mock_action(state).stage("postprocessing").dn == -1

    def test_steady_state_noop(self):
        """Test that moderate load leaves everything unchanged."""
        assert mock_action(_state()).is_noop

    def test_veto_after_negative_experience(self):
        """Test that a store-all buffer's similar negative experience vetoes the action."""
        state = _state(pre=0.95)
        action = mock_action(state)
        bad = Experience(extract_features(state), action, -1.0, 0)
        assert mock_action(state, [bad], veto_negative=True).is_noop
        good = Experience(extract_features(state), action, 1.0, 0)
        assert mock_action(state, [good], veto_negative=True) == action

    def test_no_veto_for_positive_only_buffers(self):
        """Test that the default policy ignores experience sign when deciding."""
        state = _state(pre=0.95)
        action = mock_action(state)
        bad = Experience(extract_features(state), action, -1.0, 0)
        assert mock_action(state, [bad]) == action

    def test_proposal_schema(self):
        """Test the proposal form of the mock decision."""
        proposal = mock_policy(_state(pre=0.95))
        assert proposal["preprocessing"] == {"action": "scale_replicas", "replicas": 2}
        assert proposal["inference"] == {"action": "none"}


class TestDecide:
    """Test one epsilon-greedy decision step."""

    def test_probe_round(self):
        """Test that epsilon 1 always probes."""
        decision = decide(
            MockPolicy(), _state(), (), ExplorationSchedule.fixed(1.0), np.random.default_rng(0)
        )
        assert decision.is_probe
        raw = absolute_to_delta(decision.proposal, _state())
        assert sum(1 for r in raw.values() if any(vars(r).values())) == 1

    def test_policy_round(self):
        """Test that epsilon 0 consults the backend."""
        schedule = ExplorationSchedule.fixed(0.0)
        decision = decide(MockPolicy(), _state(pre=0.95), (), schedule, np.random.default_rng(0))
        assert decision == Decision(mock_policy(_state(pre=0.95)), "mock", 0.0)

    def test_backend_failure_is_noop(self, caplog):
        """Test that a failing backend yields an empty proposal and an error."""
        with caplog.at_level("WARNING", logger="pipescale.policy"):
            schedule = ExplorationSchedule.fixed(0.0)
            decision = decide(RaisingPolicy(), _state(), (), schedule, np.random.default_rng(0))
        assert decision.proposal == {}
        assert decision.error == "TimeoutError: deadline exceeded"
        assert "no-op" in caplog.text

    def test_non_object_proposal(self):
        """Test that a non-object reply becomes a no-op."""
        decision = decide(
            ListPolicy(), _state(), (), ExplorationSchedule.fixed(0.0), np.random.default_rng(0)
        )
        assert decision.proposal == {}
        assert "list" in decision.error

    def test_schedule_decays_once(self):
        """Test that each call decays the schedule exactly once."""
        schedule = ExplorationSchedule()
        rng = np.random.default_rng(0)
        decide(MockPolicy(), _state(), (), schedule, rng)
        decide(MockPolicy(), _state(), (), schedule, rng)
        assert schedule.epsilon == pytest.approx(0.15 * 0.95**2)

    def test_probe_rate(self):
        """Test that the probe fraction matches epsilon."""
        schedule = ExplorationSchedule.fixed(0.25)
        rng = np.random.default_rng(3)
        probes = sum(
            decide(MockPolicy(), _state(), (), schedule, rng).is_probe for _ in range(2000)
        )
        assert probes / 2000 == pytest.approx(0.25, abs=0.03)
