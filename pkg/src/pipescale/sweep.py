"""
Scenario sweeps and ablations.

run_sweep() runs every scenario under the in-context agent and each
baseline parameterisation for every seed, in a process pool. Each run
owns its simulator, buffer and log; only summaries come back. Baselines
are reported at their best parameterisation per scenario (tuned).

run_ablation() runs the agent under each ablation configuration and
reports throughput and P99 deltas against the full configuration.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from itertools import product
from typing import Any

import pandas as pd

from .baselines import BaselineConfig
from .harness import run_experiment
from .scenario import ControllerConfig, SAIRConfig, Scenario

logger = logging.getLogger(__name__)

# Baseline parameter grids swept for tuning; the first entry is the default.
BASELINE_GRIDS: dict[str, list[dict[str, Any]]] = {
    "static": [{}],
    "hpa_cpu": [{"hpa_target_util": u} for u in (0.7, 0.5, 0.6, 0.8)],
    "threshold": [
        {"threshold_cpu_ms": c, "threshold_gpu_ms": g}
        for c, g in product((100.0, 50.0, 150.0), (200.0, 100.0, 300.0))
    ],
    "vpa": [{"vpa_headroom": h} for h in (1.15, 1.05, 1.3)],
}

_SUMMARY_FIELDS = (
    "p99_ms",
    "mean_latency_ms",
    "throughput_rps",
    "billable_cost_per_1k",
    "effective_cost_per_1k",
    "effective_cost",
    "scaling_events",
)


def _agent(**changes: Any) -> Callable[[SAIRConfig], SAIRConfig]:
    return lambda sair: replace(sair, **changes)


ABLATIONS: dict[str, Callable[[SAIRConfig], SAIRConfig]] = {
    "full": _agent(),
    "no_icl": _agent(no_icl=True),
    "store_all": _agent(store_all=True),
    "linear_penalty": _agent(sla_penalty="linear"),
    "no_bonus": _agent(proactive_bonus=False),
    "equal_weights": _agent(w_latency=0.5, w_cost=0.5),
    "cost_focus": _agent(w_latency=0.3, w_cost=0.7),
    "pre_only": _agent(pre_only=True),
}


def _worker_count(workers: int | None, jobs: int) -> int:
    if workers is not None and workers <= 0:
        raise ValueError(f"workers must be positive, got {workers}")
    if workers is None:
        workers = min(os.cpu_count() or 1, 8)
    return max(1, min(workers, jobs))


def _summarize_run(job: tuple[Scenario, dict[str, Any]]) -> dict[str, Any]:
    scenario, params = job
    summary = run_experiment(scenario).summary
    row: dict[str, Any] = {
        "scenario": scenario.name,
        "controller": scenario.controller.label,
        "seed": scenario.seed,
        "params": params,
        "reward_total": summary["reward"]["total"],
    }
    row.update({k: summary[k] for k in _SUMMARY_FIELDS})
    return row


def run_jobs(
    jobs: Sequence[tuple[Scenario, dict[str, Any]]], *, workers: int | None = 1
) -> pd.DataFrame:
    """
    Run (scenario, params) jobs and collect one summary row per job.

    workers=1 runs in-process; otherwise a process pool is used and rows
    keep job order.
    """
    if not jobs:
        return pd.DataFrame(columns=["scenario", "controller", "seed", "params", "reward_total"])
    n = _worker_count(workers, len(jobs))
    if n == 1:
        rows = [_summarize_run(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as executor:
            rows = list(executor.map(_summarize_run, jobs))
    return pd.DataFrame(rows)


def sweep_jobs(
    scenarios: Iterable[Scenario],
    seeds: Sequence[int],
    *,
    baselines: Sequence[str] = ("static", "hpa_cpu", "threshold", "vpa"),
    tune: bool = True,
) -> list[tuple[Scenario, dict[str, Any]]]:
    """Jobs for the agent plus every baseline parameterisation, per seed."""
    jobs: list[tuple[Scenario, dict[str, Any]]] = []
    for scenario in scenarios:
        for seed in seeds:
            seeded = scenario.with_seed(seed)
            jobs.append((seeded, {}))
            for kind in baselines:
                grid = BASELINE_GRIDS[kind] if tune else BASELINE_GRIDS[kind][:1]
                for params in grid:
                    baseline = BaselineConfig(kind=kind).with_overrides(**params)
                    controller = ControllerConfig(kind=kind, baseline=baseline)
                    jobs.append((seeded.with_controller(controller), dict(params)))
    return jobs


def tuned_rows(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Seed-averaged rows, keeping the highest-reward parameterisation of each
    controller per scenario.
    """
    if frame.empty:
        return frame
    frame = frame.assign(params_key=frame["params"].map(lambda p: repr(sorted(p.items()))))
    numeric = ["reward_total", *_SUMMARY_FIELDS]
    means = frame.groupby(["scenario", "controller", "params_key"], as_index=False)[numeric].mean()
    best = means.loc[means.groupby(["scenario", "controller"])["reward_total"].idxmax()]
    return best.sort_values(["scenario", "controller"]).reset_index(drop=True)


def run_sweep(
    scenarios: Iterable[Scenario],
    seeds: Sequence[int],
    *,
    baselines: Sequence[str] = ("static", "hpa_cpu", "threshold", "vpa"),
    tune: bool = True,
    workers: int | None = None,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """
    Sweep scenarios x seeds x controllers.

    Args:
        scenarios: Base scenarios; their controller section configures the agent
        seeds: Seeds each scenario is run with
        baselines: Baseline kinds to compare against
        tune: Sweep each baseline's parameter grid instead of its defaults
        workers: Process count (default: min(cpu_count, 8))

    Returns:
        (all per-run rows, tuned seed-averaged rows)
    """
    if not seeds:
        raise ValueError("seeds must be non-empty")
    jobs = sweep_jobs(scenarios, seeds, baselines=baselines, tune=tune)
    logger.info("sweep: %d runs", len(jobs))
    frame = run_jobs(jobs, workers=workers)
    return frame, tuned_rows(frame)


def run_ablation(
    scenario: Scenario,
    seeds: Sequence[int],
    *,
    ablations: Sequence[str] | None = None,
    workers: int | None = None,
) -> pd.DataFrame:
    """
    Agent runs under each ablation, seed-averaged, with deltas against full.

    Returns:
        One row per ablation with throughput, P99, reward and their
        relative change versus "full"
    """
    names = list(ablations) if ablations is not None else list(ABLATIONS)
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise ValueError(f"unknown ablations {unknown}, choose from {list(ABLATIONS)}")
    if "full" not in names:
        names.insert(0, "full")
    if not seeds:
        raise ValueError("seeds must be non-empty")

    jobs = []
    for name in names:
        sair = ABLATIONS[name](scenario.controller.sair)
        ablated = scenario.with_controller(replace(scenario.controller, kind="sair", sair=sair))
        jobs.extend((ablated.with_seed(seed), {"ablation": name}) for seed in seeds)
    frame = run_jobs(jobs, workers=workers)
    frame = frame.assign(ablation=frame["params"].map(lambda p: p["ablation"]))
    means = frame.groupby("ablation", sort=False)[
        ["throughput_rps", "p99_ms", "effective_cost_per_1k", "reward_total"]
    ].mean()
    full = means.loc["full"]
    means["throughput_delta"] = means["throughput_rps"] / full["throughput_rps"] - 1.0
    means["p99_delta"] = means["p99_ms"] / full["p99_ms"] - 1.0
    return means.reset_index()
