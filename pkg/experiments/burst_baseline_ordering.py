#!/usr/bin/env python3
"""
Baseline ordering on the burst workload.

Sweeps the mock-policy agent against tuned Threshold and HPA-CPU baselines
on scenarios/burst.yaml over several seeds and checks the directional
ordering:
- agent P99 <= tuned Threshold P99
- agent effective cost <= tuned HPA-CPU effective cost

Requires explicit approval via ALLOW_LONG=1 (every baseline grid point is
run for every seed).
"""

import os
import platform
import sys
import time
from datetime import datetime

from pipescale.scenario import load_scenario
from pipescale.sweep import run_sweep

SCENARIO_PATH = "scenarios/burst.yaml"
SEEDS = (0, 1, 2, 3, 4)
BASELINES = ("static", "hpa_cpu", "threshold", "vpa")
AGENT = "sair-mock"
REPORT_PATH = "experiments/results/burst_baseline_ordering.md"


def check_approval():
    """Check for ALLOW_LONG approval gate."""
    if os.environ.get("ALLOW_LONG", "0") != "1":
        print("=" * 80)
        print("ERROR: ALLOW_LONG approval required")
        print("=" * 80)
        print()
        print(f"This experiment runs tuned baseline grids over {len(SEEDS)} seeds.")
        print("To proceed, set the ALLOW_LONG environment variable:")
        print()
        print("  ALLOW_LONG=1 python experiments/burst_baseline_ordering.py")
        print()
        sys.exit(1)


def run_ordering():
    """Sweep the burst scenario and compare the agent with tuned baselines."""
    print("=" * 80)
    print("Burst workload baseline ordering")
    print("=" * 80)
    print()

    scenario = load_scenario(SCENARIO_PATH)
    start = time.perf_counter()
    _, tuned = run_sweep([scenario], list(SEEDS), baselines=BASELINES, tune=True)
    elapsed = time.perf_counter() - start

    table = tuned.set_index("controller")
    columns = ["p99_ms", "effective_cost", "effective_cost_per_1k", "reward_total"]
    print(table[columns].to_string(float_format=lambda v: f"{v:.3f}"))
    print()

    agent = table.loc[AGENT]
    latency_ok = agent["p99_ms"] <= table.loc["threshold", "p99_ms"]
    cost_ok = agent["effective_cost"] <= table.loc["hpa_cpu", "effective_cost"]
    print(f"  P99 <= tuned Threshold:          {'✓ PASS' if latency_ok else '❌ FAIL'}")
    print(f"  Effective cost <= tuned HPA-CPU: {'✓ PASS' if cost_ok else '❌ FAIL'}")
    print()

    save_report(table[columns], elapsed, latency_ok, cost_ok)
    print(f"Report saved to {REPORT_PATH}")
    return bool(latency_ok and cost_ok)


def save_report(table, elapsed, latency_ok, cost_ok):
    """Save the ordering report to markdown."""
    rows = "\n".join(
        f"| {name} | {row.p99_ms:.1f} | {row.effective_cost:.4f} | "
        f"{row.effective_cost_per_1k:.4f} | {row.reward_total:.3f} |"
        for name, row in table.iterrows()
    )
    content = f"""# Burst Workload Baseline Ordering Report

**Date:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}
**Experiment:** experiments/burst_baseline_ordering.py
**Scenario:** {SCENARIO_PATH}, seeds {list(SEEDS)}

---

## Environment

| Property | Value |
|----------|-------|
| Python Version | {sys.version.split()[0]} |
| Platform | {platform.system()} {platform.release()} |
| Wall Time | {elapsed:.1f}s |

---

## Tuned, Seed-Averaged Results

| Controller | P99 (ms) | Effective cost ($) | Effective $/1K | Reward |
|------------|----------|--------------------|----------------|--------|
{rows}

---

## Conclusion

- Agent P99 <= tuned Threshold: {'PASS' if latency_ok else 'FAIL'}
- Agent effective cost <= tuned HPA-CPU: {'PASS' if cost_ok else 'FAIL'}
"""
    os.makedirs(os.path.dirname(REPORT_PATH), exist_ok=True)
    with open(REPORT_PATH, "w") as f:
        f.write(content)


if __name__ == "__main__":
    check_approval()
    success = run_ordering()
    sys.exit(0 if success else 1)
