"""
Tests for the reference controllers (baselines.py).
"""

import pytest

from pipescale.baselines import (
    BaselineConfig,
    HPAController,
    StaticController,
    ThresholdController,
    VPAController,
    hpa_decide,
    make_controller,
    static_decide,
    threshold_decide,
    vpa_decide,
)
from pipescale.simulator import PipelineState, ResourceConfig, StageState
from pipescale.utils import ConfigurationError


def _stage(name, kind, *, replicas=1, util=0.5, p99=80.0, cpu_used=900.0, mem_used=900.0):
    return StageState(
        stage_id=1,
        name=name,
        kind=kind,
        config=ResourceConfig(replicas=replicas),
        queue_depth=0,
        cpu_util=util if kind == "cpu" else 0.0,
        gpu_util_quota=util if kind == "gpu" else 0.0,
        gpu_util_actual=util if kind == "gpu" else 0.0,
        processing_ms=50.0,
        queue_delay_ms=0.0,
        p99_ms=p99,
        arrival_rate_rps=5.0,
        capacity_rps=10.0,
        ready_replicas=replicas,
        cpu_usage_millicores=cpu_used,
        memory_usage_mb=mem_used,
    )


def _state(pre=None, inf=None, post=None, t=0.0):
    stages = (
        _stage("preprocessing", "cpu", **(pre or {})),
        _stage("inference", "gpu", **(inf or {"p99": 150.0})),
        _stage("postprocessing", "cpu", **(post or {})),
    )
    return PipelineState(
        stages=stages, p99_ms=300.0, mean_latency_ms=200.0, throughput_rps=5.0, t=t
    )


class TestBaselineConfig:
    """Test parameter validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kind": "keda"},
            {"hpa_target_util": 1.0},
            {"threshold_cpu_ms": 0.0},
            {"threshold_scale_down_fraction": 1.0},
            {"vpa_headroom": 0.0},
            {"vpa_window": 0},
        ],
    )
    def test_invalid(self, kwargs):
        """Test that out-of-range parameters are rejected."""
        with pytest.raises(ConfigurationError):
            BaselineConfig(**kwargs)

    def test_overrides(self):
        """Test that overrides return a modified copy."""
        config = BaselineConfig(kind="hpa_cpu").with_overrides(hpa_target_util=0.5)
        assert config.hpa_target_util == 0.5
        assert config.to_dict()["kind"] == "hpa_cpu"


class TestStatic:
    """Test the static allocation."""

    def test_always_noop(self):
        """Test that the static controller never scales."""
        assert static_decide(_state(pre={"util": 1.0})).is_noop

    def test_one_replica_per_stage(self):
        """Test the static initial allocation."""
        configs = StaticController().initial_configs([ResourceConfig(replicas=4)] * 3)
        assert all(c.replicas == 1 for c in configs)


class TestHPA:
    """Test HPA on CPU utilization."""

    def test_scale_up(self):
        """Test n=2, u=0.95 at target 0.70 adds one replica."""
        action = hpa_decide(_state(pre={"replicas": 2, "util": 0.95}), BaselineConfig())
        assert action.stage("preprocessing").dn == 1

    def test_large_step_snaps_to_grid(self):
        """Test that a desired +3 becomes +2."""
        config = BaselineConfig(hpa_target_util=0.25)
        action = hpa_decide(_state(pre={"util": 1.0}), config)
        assert action.stage("preprocessing").dn == 2

    def test_scale_down_one_step(self):
        """Test that an oversized stage shrinks one replica at a time."""
        action = hpa_decide(_state(post={"replicas": 4, "util": 0.2}), BaselineConfig())
        assert action.stage("postprocessing").dn == -1

    def test_gpu_not_scaled(self):
        """Test that HPA leaves GPU stages alone."""
        action = hpa_decide(_state(inf={"util": 1.0, "p99": 500.0}), BaselineConfig())
        assert action.stage("inference").is_noop

    def test_stabilization_window(self):
        """Test that a stage changed within the window is left alone."""
        controller = HPAController(BaselineConfig(kind="hpa_cpu"))
        state = _state(pre={"replicas": 2, "util": 0.95})
        assert controller.decide(state, 0.0).stage("preprocessing").dn == 1
        assert controller.decide(state, 30.0).is_noop
        assert controller.decide(state, 60.0).stage("preprocessing").dn == 1


class TestThreshold:
    """Test stage-P99 threshold rules."""

    def test_cpu_above_threshold(self):
        """Test that a slow CPU stage gains a replica."""
        action = threshold_decide(_state(pre={"p99": 150.0}), BaselineConfig())
        assert action.stage("preprocessing").dn == 1

    def test_gpu_uses_its_own_threshold(self):
        """Test the 200 ms GPU threshold."""
        assert threshold_decide(_state(), BaselineConfig()).stage("inference").dn == 0
        action = threshold_decide(_state(inf={"p99": 250.0}), BaselineConfig())
        assert action.stage("inference").dn == 1

    def test_scale_down_below_fraction(self):
        """Test that a fast stage with spare replicas shrinks."""
        action = threshold_decide(_state(post={"replicas": 3, "p99": 40.0}), BaselineConfig())
        assert action.stage("postprocessing").dn == -1

    def test_never_below_one_replica(self):
        """Test that a single replica is kept."""
        action = threshold_decide(_state(post={"p99": 10.0}), BaselineConfig())
        assert action.stage("postprocessing").dn == 0

    def test_cooldown(self):
        """Test the per-stage cooldown."""
        controller = ThresholdController(BaselineConfig(kind="threshold"))
        state = _state(pre={"p99": 150.0})
        assert controller.decide(state, 0.0).stage("preprocessing").dn == 1
        assert controller.decide(state, 59.0).stage("preprocessing").dn == 0


class TestVPA:
    """Test peak-usage vertical sizing."""

    def test_cpu_recommendation(self):
        """Test that peak 1200m at 1000m recommends +500m."""
        action = vpa_decide(_state(pre={"cpu_used": 1200.0}), BaselineConfig())
        assert action.stage("preprocessing").dc == 500
        assert action.stage("preprocessing").dn == 0

    def test_shrinks_idle_cpu(self):
        """Test that a mostly idle allocation shrinks."""
        action = vpa_decide(_state(post={"cpu_used": 200.0}), BaselineConfig())
        assert action.stage("postprocessing").dc == -500

    def test_peak_over_window(self):
        """Test that the recommendation follows the window peak."""
        history = [_state(pre={"cpu_used": 1300.0}), _state(), _state()]
        action = vpa_decide(_state(), BaselineConfig(), history)
        assert action.stage("preprocessing").dc == 500

    def test_old_peak_forgotten(self):
        """Test that observations beyond the window are ignored."""
        controller = VPAController(BaselineConfig(kind="vpa", vpa_window=2))
        controller.decide(_state(pre={"cpu_used": 1300.0}), 0.0)
        controller.decide(_state(), 30.0)
        assert controller.decide(_state(), 60.0).stage("preprocessing").dc == 0

    def test_gpu_untouched(self):
        """Test that GPU stages are not resized."""
        assert vpa_decide(_state(), BaselineConfig()).stage("inference").is_noop


class TestFactory:
    """Test controller construction."""

    @pytest.mark.parametrize(
        "kind,cls",
        [
            ("static", StaticController),
            ("hpa_cpu", HPAController),
            ("threshold", ThresholdController),
            ("vpa", VPAController),
        ],
    )
    def test_kinds(self, kind, cls):
        """Test that each kind builds its controller."""
        assert isinstance(make_controller(BaselineConfig(kind=kind)), cls)

    def test_outputs_on_grid(self):
        """Test that every baseline emits grid actions."""
        state = _state(pre={"replicas": 3, "util": 0.99, "p99": 500.0, "cpu_used": 1500.0})
        for kind in ("static", "hpa_cpu", "threshold", "vpa"):
            assert make_controller(BaselineConfig(kind=kind)).decide(state, 0.0).on_grid()
