#!/usr/bin/env python3
"""
Experience selection quality at full scale.

On 200 random 8-experience buffers, compares greedy diversity-regularized
selection (M = 3) with the mean of 100 uniform random 3-subsets and with
the exhaustive optimum over all C(8, 3) subsets. Checks:
- greedy >= random mean on at least 95% of buffers
- greedy >= 0.5 x exhaustive optimum on every buffer

Requires explicit approval via ALLOW_LONG=1.
"""

import itertools
import math
import os
import platform
import sys
import time
from datetime import datetime

import numpy as np

from pipescale.actions import ScalingAction, StageDelta
from pipescale.experience import (
    Experience,
    ExperienceBuffer,
    SelectionConfig,
    greedy_indices,
    selection_objective,
)

N_BUFFERS = 200
BUFFER_SIZE = 8
M = 3
RANDOM_DRAWS = 100
SEED = 0
REPORT_PATH = "experiments/results/selection_quality.md"

ACTION = ScalingAction((StageDelta("stage_1", "cpu", dn=1),))


def check_approval():
    """Check for ALLOW_LONG approval gate."""
    if os.environ.get("ALLOW_LONG", "0") != "1":
        print("=" * 80)
        print("ERROR: ALLOW_LONG approval required")
        print("=" * 80)
        print()
        print(f"This experiment scores {N_BUFFERS} buffers exhaustively.")
        print("To proceed, set the ALLOW_LONG environment variable:")
        print()
        print("  ALLOW_LONG=1 python experiments/selection_quality.py")
        print()
        sys.exit(1)


def random_buffer(rng):
    """Buffer of BUFFER_SIZE experiences with 4-d Gaussian contexts."""
    buffer = ExperienceBuffer(r_min=-math.inf)
    for i in range(BUFFER_SIZE):
        context = tuple(float(v) for v in rng.normal(size=4))
        buffer.store(Experience(context, ACTION, float(rng.uniform(0.1, 3.0)), i))
    return buffer


def run_quality():
    """Score greedy selection against random and exhaustive references."""
    print("=" * 80)
    print("Experience selection quality")
    print("=" * 80)
    print()

    rng = np.random.default_rng(SEED)
    config = SelectionConfig(m=M)
    beats_random = 0
    near_optimal = 0
    ratios = []

    start = time.perf_counter()
    for _ in range(N_BUFFERS):
        buffer = random_buffer(rng)
        x = rng.normal(size=4)
        greedy = selection_objective(buffer, greedy_indices(buffer, x, config), x, config)
        random_mean = float(
            np.mean(
                [
                    selection_objective(
                        buffer, rng.choice(BUFFER_SIZE, size=M, replace=False), x, config
                    )
                    for _ in range(RANDOM_DRAWS)
                ]
            )
        )
        best = max(
            selection_objective(buffer, combo, x, config)
            for combo in itertools.combinations(range(BUFFER_SIZE), M)
        )
        beats_random += greedy >= random_mean - 1e-12
        near_optimal += greedy >= 0.5 * best - 1e-12
        if best > 0:
            ratios.append(greedy / best)
    elapsed = time.perf_counter() - start

    random_rate = beats_random / N_BUFFERS
    random_ok = random_rate >= 0.95
    optimum_ok = near_optimal == N_BUFFERS

    print(f"  Buffers:                 {N_BUFFERS}")
    print(f"  Greedy >= random mean:   {random_rate:.1%}")
    print(f"  Greedy >= 0.5 x optimum: {near_optimal}/{N_BUFFERS}")
    print(f"  Min greedy/optimum:      {min(ratios):.3f}")
    print(f"  Wall time:               {elapsed:.1f}s")
    print()
    print(f"  Beats random on >= 95%:  {'✓ PASS' if random_ok else '❌ FAIL'}")
    print(f"  Half-optimal everywhere: {'✓ PASS' if optimum_ok else '❌ FAIL'}")
    print()

    save_report(random_rate, near_optimal, ratios, elapsed, random_ok, optimum_ok)
    print(f"Report saved to {REPORT_PATH}")
    return random_ok and optimum_ok


def save_report(random_rate, near_optimal, ratios, elapsed, random_ok, optimum_ok):
    """Save the selection-quality report to markdown."""
    content = f"""# Experience Selection Quality Report

**Date:** {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}
**Experiment:** experiments/selection_quality.py
**Setup:** {N_BUFFERS} buffers of {BUFFER_SIZE}, M = {M}, {RANDOM_DRAWS} random draws, seed {SEED}

---

## Environment

| Property | Value |
|----------|-------|
| Python Version | {sys.version.split()[0]} |
| Platform | {platform.system()} {platform.release()} |
| Wall Time | {elapsed:.1f}s |

---

## Results

| Metric | Value |
|--------|-------|
| Greedy >= random mean | {random_rate:.1%} |
| Greedy >= 0.5 x optimum | {near_optimal}/{N_BUFFERS} |
| Mean greedy/optimum | {float(np.mean(ratios)):.3f} |
| Min greedy/optimum | {min(ratios):.3f} |

---

## Conclusion

- Beats random selection on >= 95% of buffers: {'PASS' if random_ok else 'FAIL'}
- Within half of the exhaustive optimum on every buffer: {'PASS' if optimum_ok else 'FAIL'}
"""
    os.makedirs(os.path.dirname(REPORT_PATH), exist_ok=True)
    with open(REPORT_PATH, "w") as f:
        f.write(content)


if __name__ == "__main__":
    check_approval()
    success = run_quality()
    sys.exit(0 if success else 1)
