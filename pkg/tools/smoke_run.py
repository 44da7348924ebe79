#!/usr/bin/env python3
"""
Smoke test for pipescale.

Quick sanity check that basic functionality works.
Run this before committing changes.

Usage:
    python tools/smoke_run.py
"""

import sys


def smoke_test():
    """Run basic smoke tests."""
    print("=" * 60)
    print("pipescale Smoke Test")
    print("=" * 60)

    try:
        import pipescale
    except ImportError as e:
        print(f"FAIL: Cannot import pipescale: {e}")
        return False

    print(f"OK   Imported pipescale version {pipescale.__version__}")

    # Simulator: a fresh pipeline reports its nominal latency
    try:
        scenario = pipescale.three_stage_scenario(rounds=2)
        sim = pipescale.PipelineSimulator(scenario.stages, scenario.initial, scenario.workload)
        state = sim.observe()
        assert state.p99_ms > 0, f"nominal P99 should be positive, got {state.p99_ms}"
        print(f"OK   fresh pipeline nominal P99 = {state.p99_ms:.1f} ms")
    except Exception as e:
        print(f"FAIL: simulator test: {e}")
        return False

    # Reward: a no-op on an unchanged state earns only the Pareto term, in [1, 2]
    try:
        config = scenario.reward_config()
        action = pipescale.ScalingAction.noop(state)
        breakdown = pipescale.compute_reward(
            state, state, action, config.new_frontier(), config
        )
        assert 1.0 <= breakdown.total <= 2.0, f"no-op reward out of range: {breakdown.total}"
        print(f"OK   no-op reward = {breakdown.total:.4f}")
    except Exception as e:
        print(f"FAIL: reward test: {e}")
        return False

    # Harness: two mock-policy rounds
    try:
        result = pipescale.run_experiment(scenario)
        assert len(result.log) == 2, f"expected 2 rounds, got {len(result.log)}"
        print(f"OK   run_experiment: reward_total = {result.summary['reward']['total']:.3f}")
    except Exception as e:
        print(f"FAIL: run_experiment test: {e}")
        return False

    # Baseline: static never scales
    try:
        static = scenario.with_controller(
            pipescale.ControllerConfig(kind="static", baseline=pipescale.BaselineConfig("static"))
        )
        events = pipescale.run_experiment(static).summary["scaling_events"]
        assert events == 0, f"static baseline should not scale, got {events} events"
        print("OK   static baseline holds its allocation")
    except Exception as e:
        print(f"FAIL: baseline test: {e}")
        return False

    print("=" * 60)
    print("All smoke tests passed!")
    print("=" * 60)
    return True


if __name__ == "__main__":
    success = smoke_test()
    sys.exit(0 if success else 1)
