"""
Tests for scenario sweeps and ablations (in-process, tiny runs).
"""

import pandas as pd
import pytest

from pipescale.scenario import three_stage_scenario
from pipescale.sweep import (
    ABLATIONS,
    BASELINE_GRIDS,
    run_ablation,
    run_sweep,
    sweep_jobs,
    tuned_rows,
)


METRICS = (
    "p99_ms",
    "mean_latency_ms",
    "throughput_rps",
    "billable_cost_per_1k",
    "effective_cost_per_1k",
    "effective_cost",
    "scaling_events",
)


def _scenario():
    return three_stage_scenario(name="tiny", rounds=2, gpu_rate_ratio=0.5)


class TestJobs:
    """Job construction."""

    def test_tuned_grid_size(self):
        """One agent job plus every baseline parameterisation per seed."""
        jobs = sweep_jobs([_scenario()], [0, 1])
        per_seed = 1 + sum(len(grid) for grid in BASELINE_GRIDS.values())
        assert len(jobs) == 2 * per_seed

    def test_untuned_uses_defaults(self):
        """Without tuning each baseline runs once with its default."""
        jobs = sweep_jobs([_scenario()], [0], tune=False)
        labels = [s.controller.label for s, _ in jobs]
        assert labels == ["sair-mock", "static", "hpa_cpu", "threshold", "vpa"]
        assert all(params == {} for _, params in jobs)

    def test_seeds_propagate(self):
        """Each job carries its seed into the workload."""
        jobs = sweep_jobs([_scenario()], [7], baselines=("static",))
        for scenario, _ in jobs:
            assert scenario.seed == 7
            assert scenario.workload.seed == 7

    def test_grid_overrides_apply(self):
        """Tuned HPA jobs carry their target utilization."""
        jobs = sweep_jobs([_scenario()], [0], baselines=("hpa_cpu",))
        targets = [s.controller.baseline.hpa_target_util for s, _ in jobs[1:]]
        assert targets == [p["hpa_target_util"] for p in BASELINE_GRIDS["hpa_cpu"]]


class TestTuning:
    """Best-parameterisation selection."""

    def test_keeps_highest_mean_reward(self):
        """Seed-averaged reward decides the kept parameterisation."""
        rows = [(0, 1, 1.0), (1, 1, 3.0), (0, 2, 2.5), (1, 2, 0.5)]
        frame = pd.DataFrame(
            [
                {
                    "scenario": "s",
                    "controller": "hpa_cpu",
                    "seed": seed,
                    "params": {"u": u},
                    "reward_total": reward,
                    **{column: 1.0 for column in METRICS},
                }
                for seed, u, reward in rows
            ]
        )
        best = tuned_rows(frame)
        assert len(best) == 1
        assert best.loc[0, "reward_total"] == pytest.approx(2.0)
        assert best.loc[0, "params_key"] == repr([("u", 1)])


class TestRuns:
    """Small end-to-end sweeps."""

    def test_run_sweep(self):
        """A one-seed sweep returns one row per controller."""
        frame, tuned = run_sweep([_scenario()], [0], baselines=("static",), tune=False, workers=1)
        assert sorted(frame["controller"]) == ["sair-mock", "static"]
        assert len(tuned) == 2
        assert (frame.loc[frame["controller"] == "static", "scaling_events"] == 0).all()

    def test_empty_seeds(self):
        """A sweep needs at least one seed."""
        with pytest.raises(ValueError, match="seeds"):
            run_sweep([_scenario()], [], workers=1)

    def test_bad_worker_count(self):
        """Worker counts must be positive."""
        with pytest.raises(ValueError, match="workers"):
            run_sweep([_scenario()], [0], baselines=(), workers=0)


class TestAblation:
    """Ablation table."""

    def test_full_is_reference(self):
        """The full configuration is always included with zero deltas."""
        table = run_ablation(_scenario(), [0], ablations=["no_icl"], workers=1)
        assert list(table["ablation"]) == ["full", "no_icl"]
        full = table.set_index("ablation").loc["full"]
        assert full["throughput_delta"] == pytest.approx(0.0)
        assert full["p99_delta"] == pytest.approx(0.0)

    def test_unknown_ablation(self):
        """Unknown ablation names are rejected."""
        with pytest.raises(ValueError, match="unknown ablations"):
            run_ablation(_scenario(), [0], ablations=["no_such"], workers=1)

    def test_registry(self):
        """Every ablation maps the agent config to a valid config."""
        sair = _scenario().controller.sair
        assert ABLATIONS["no_icl"](sair).no_icl
        assert ABLATIONS["store_all"](sair).store_all
        assert ABLATIONS["linear_penalty"](sair).sla_penalty == "linear"
        assert not ABLATIONS["no_bonus"](sair).proactive_bonus
        assert ABLATIONS["full"](sair) == sair
