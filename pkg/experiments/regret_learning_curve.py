#!/usr/bin/env python3
"""
Regret learning curve: 400-round stationary run with oracle rollouts.

Runs the mock-policy agent on the three-stage pipeline with brute-force
oracle scoring every round, then checks:
- the cumulative regret never exceeds the assembled bound
- mean regret over the last quartile is below half the first quartile's

Requires explicit approval via ALLOW_LONG=1 (oracle rollouts make every
round several simulated intervals; expect a few minutes).
"""

import os
import platform
import sys
import time
from datetime import datetime

from pipescale.harness import run_experiment
from pipescale.scenario import three_stage_scenario

ROUNDS = 400
SEED = 0
REPORT_PATH = "experiments/results/regret_learning_curve.md"


def check_approval():
    """Check for ALLOW_LONG approval gate."""
    if os.environ.get("ALLOW_LONG", "0") != "1":
        print("=" * 80)
        print("ERROR: ALLOW_LONG approval required")
        print("=" * 80)
        print()
        print(f"This experiment runs {ROUNDS} rounds with oracle rollouts per round.")
        print("To proceed, set the ALLOW_LONG environment variable:")
        print()
        print("  ALLOW_LONG=1 python experiments/regret_learning_curve.py")
        print()
        sys.exit(1)


def run_curve():
    """Run the stationary scenario and evaluate the learning effect."""
    print("=" * 80)
    print("Regret learning curve")
    print("=" * 80)
    print()

    scenario = three_stage_scenario(
        name="stationary",
        rounds=ROUNDS,
        seed=SEED,
        gpu_rate_ratio=0.5,
        oracle=True,
        oracle_replicas_only=True,
    )

    start = time.perf_counter()
    result = run_experiment(scenario)
    elapsed = time.perf_counter() - start
    accounting = result.accounting

    quarter = ROUNDS // 4
    first = accounting.mean_regret(0, quarter)
    last = accounting.mean_regret(ROUNDS - quarter, ROUNDS)
    ratio = last / first if first > 0 else float("nan")
    learning = first > 0 and last < 0.5 * first
    bound_ok = accounting.holds()

    quartiles = [accounting.mean_regret(q * quarter, (q + 1) * quarter) for q in range(4)]

    print(f"  Rounds:              {len(accounting)}")
    print(f"  Wall time:           {elapsed:.1f}s")
    print(f"  Cumulative regret:   {accounting.cumulative_regret:.3f}")
    print(f"  Bound:               {accounting.bound():.3f}")
    print(f"  Quartile means:      {', '.join(f'{q:.4f}' for q in quartiles)}")
    print(f"  Last/first ratio:    {ratio:.3f}")
    print()
    print(f"  Bound holds:         {'✓ PASS' if bound_ok else '❌ FAIL'}")
    print(f"  Learning effect:     {'✓ PASS' if learning else '❌ FAIL'}")
    print()

    save_report(accounting, quartiles, ratio, elapsed, bound_ok, learning)
    print(f"Report saved to {REPORT_PATH}")
    return bound_ok and learning


def save_report(accounting, quartiles, ratio, elapsed, bound_ok, learning):
    """Save the learning-curve report to markdown."""
    rows = "\n".join(f"| Q{i + 1} | {q:.4f} |" for i, q in enumerate(quartiles))
    content = f"""# Regret Learning Curve Report

**Date:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}
**Experiment:** experiments/regret_learning_curve.py
**Scenario:** three-stage, Poisson 15 req/s, rho0 = 0.5, seed {SEED}, {ROUNDS} rounds

---

## Environment

| Property | Value |
|----------|-------|
| Python Version | {sys.version.split()[0]} |
| Platform | {platform.system()} {platform.release()} |
| Wall Time | {elapsed:.1f}s |

---

## Mean Regret per Quartile

| Quartile | Mean regret |
|----------|-------------|
{rows}

Last/first ratio: {ratio:.3f} (target < 0.5)

---

## Bound

| Quantity | Value |
|----------|-------|
| Cumulative regret | {accounting.cumulative_regret:.4f} |
| Bound | {accounting.bound():.4f} |
| Out-of-support share | {accounting.delta_hat:.4f} |
| Closing residual (report only) | {accounting.closing_residual:.4f} |
| Exploration mass | {accounting.epsilon_mass:.4f} |

---

## Conclusion

- Bound holds: {'PASS' if bound_ok else 'FAIL'}
- Learning effect: {'PASS' if learning else 'FAIL'}
"""
    os.makedirs(os.path.dirname(REPORT_PATH), exist_ok=True)
    with open(REPORT_PATH, "w") as f:
        f.write(content)


if __name__ == "__main__":
    check_approval()
    success = run_curve()
    sys.exit(0 if success else 1)
