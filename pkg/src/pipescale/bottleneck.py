"""
Bottleneck-detection evaluation.

A suite of three-stage scenarios is generated with a known limiting stage
(or pair of stages). Each scenario is observed over a number of short
independent trials; in every trial the controller either takes a random
forced probe (probability epsilon) or lets the mock policy decide. The
detected bottleneck is the stage with the most scale-ups, or "multiple"
when the runner-up is within 20% of it.

Suite construction:
    single: the bottleneck stage runs at a fraction f in [0.3, 0.5] of the
        base rate; arrivals are 1.2-1.5x its capacity, so every other stage
        stays below the mock's scale-up threshold.
    multiple: an upstream stage i and a downstream stage j with
        c_j = c_i**2 / lambda. Stage j only sees c_i requests/s, so both
        stages carry the same demand ratio lambda / c_i.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .actions import CooldownState, absolute_to_delta, validate
from .config import (
    BOTTLENECK_MULTIPLE_TOLERANCE,
    BOTTLENECK_OBSERVE_S,
    BOTTLENECK_PROBE_EPSILON,
    DEFAULT_STAGE_NAMES,
)
from .policy import ExplorationSchedule, MockPolicy, decide
from .scenario import Scenario, three_stage_scenario
from .simulator import PipelineSimulator
from .workload import WorkloadPattern

logger = logging.getLogger(__name__)

MULTIPLE = "multiple"
UNDETECTED = "undetected"
LABELS: tuple[str, ...] = (*DEFAULT_STAGE_NAMES, MULTIPLE)

Detector = Callable[["BottleneckCase"], str]


@dataclass(frozen=True)
class BottleneckCase:
    """A scenario with its ground-truth bottleneck label."""

    label: str
    scenario: Scenario


def _rates(rng: np.random.Generator, label: str) -> tuple[tuple[float, float, float], float]:
    base = float(rng.uniform(20.0, 40.0))
    rates = [base * float(rng.uniform(1.0, 1.2)) for _ in range(3)]
    factor = float(rng.uniform(0.3, 0.5))
    load = float(rng.uniform(1.2, 1.5))
    if label == MULTIPLE:
        pairs = [(0, 1), (0, 2), (1, 2)]
        i, j = pairs[int(rng.integers(len(pairs)))]
        rates[i] = factor * base
        arrival = load * rates[i]
        rates[j] = rates[i] ** 2 / arrival
    else:
        b = DEFAULT_STAGE_NAMES.index(label)
        rates[b] = factor * base
        arrival = load * rates[b]
    return (rates[0], rates[1], rates[2]), arrival


def generate_suite(n_scenarios: int = 200, *, seed: int = 0) -> list[BottleneckCase]:
    """
    Balanced suite of labelled scenarios, cycling through LABELS.

    Raises:
        ValueError: If n_scenarios < 1
    """
    if n_scenarios < 1:
        raise ValueError(f"n_scenarios must be >= 1, got {n_scenarios}")
    rng = np.random.default_rng(seed)
    suite = []
    for k in range(n_scenarios):
        label = LABELS[k % len(LABELS)]
        rates, arrival = _rates(rng, label)
        case_seed = seed * 1_000_003 + k
        scenario = three_stage_scenario(
            name=f"bottleneck-{k:03d}-{label}",
            rates=rates,
            workload=WorkloadPattern(kind="poisson", base_rate=arrival, seed=case_seed),
            rounds=0,
            seed=case_seed,
        )
        suite.append(BottleneckCase(label, scenario))
    return suite


def trials_for(n_stages: int, probes_per_stage: int, epsilon: float) -> int:
    """Trials needed for an expected probes_per_stage probes on every stage."""
    return math.ceil(n_stages * probes_per_stage / epsilon)


def classify(counts: Counter[str], tolerance: float = BOTTLENECK_MULTIPLE_TOLERANCE) -> str:
    """
    Label from per-stage scale-up counts.

    Returns:
        The plurality stage, MULTIPLE when the runner-up is within tolerance
        of it, UNDETECTED when nothing was scaled up
    """
    ranked = counts.most_common()
    if not ranked or ranked[0][1] == 0:
        return UNDETECTED
    if len(ranked) > 1 and ranked[1][1] >= (1.0 - tolerance) * ranked[0][1]:
        return MULTIPLE
    return ranked[0][0]


def scale_up_counts(
    scenario: Scenario,
    *,
    probes_per_stage: int = 16,
    epsilon: float = BOTTLENECK_PROBE_EPSILON,
    observe_s: float = BOTTLENECK_OBSERVE_S,
) -> Counter[str]:
    """
    Scale-ups per stage over independent observe-then-decide trials.

    Each trial starts the pipeline from its initial allocation, lets
    queues build for observe_s, observes the next observe_s and takes one
    decision: a forced probe with probability epsilon, otherwise the mock
    policy.
    """
    policy = MockPolicy(sla_ms=scenario.sla_ms)
    schedule = ExplorationSchedule.fixed(epsilon)
    rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 2]))
    cooldowns = CooldownState(0.0, 0.0)
    counts: Counter[str] = Counter({s.name: 0 for s in scenario.stages})
    n_trials = trials_for(len(scenario.stages), probes_per_stage, epsilon)
    for trial in range(n_trials):
        sim = PipelineSimulator(
            scenario.stages,
            scenario.initial,
            scenario.workload,
            seed=scenario.seed * 10_007 + trial,
            startup_delay_s=scenario.startup_delay_s,
            dt=scenario.dt,
        )
        sim.run_for(observe_s)
        sim.reset_window()
        sim.run_for(observe_s)
        state = sim.observe()
        decision = decide(policy, state, (), schedule, rng)
        action = validate(absolute_to_delta(decision.proposal, state), state, cooldowns, sim.t)
        for d in action.stages:
            if d.is_scale_up:
                counts[d.name] += 1
    return counts


def forced_probe_detector(
    *,
    probes_per_stage: int = 16,
    epsilon: float = BOTTLENECK_PROBE_EPSILON,
    observe_s: float = BOTTLENECK_OBSERVE_S,
) -> Detector:
    """Detector that runs the mock controller with forced probes."""

    def detect(case: BottleneckCase) -> str:
        counts = scale_up_counts(
            case.scenario,
            probes_per_stage=probes_per_stage,
            epsilon=epsilon,
            observe_s=observe_s,
        )
        label = classify(counts)
        logger.debug("%s: truth=%s detected=%s %s", case.scenario.name, case.label, label, counts)
        return label

    return detect


def random_detector(seed: int = 0) -> Detector:
    """Chance-level detector: a uniformly random label per case."""
    rng = np.random.default_rng(seed)

    def detect(case: BottleneckCase) -> str:
        return LABELS[int(rng.integers(len(LABELS)))]

    return detect


@dataclass(frozen=True)
class ClassMetrics:
    """Precision, recall and F1 of one class."""

    label: str
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
        }


@dataclass
class BottleneckReport:
    """
    Confusion matrix and per-class metrics.

    matrix[i][j] counts cases of true class LABELS[i] detected as
    columns[j]; the last column collects undetected cases.
    """

    matrix: np.ndarray
    columns: tuple[str, ...] = (*LABELS, UNDETECTED)
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.matrix.sum())

    @property
    def accuracy(self) -> float:
        if self.n == 0:
            return math.nan
        return float(np.trace(self.matrix[:, : len(LABELS)])) / self.n

    def per_class(self) -> list[ClassMetrics]:
        metrics = []
        for i, label in enumerate(LABELS):
            tp = float(self.matrix[i, i])
            predicted = float(self.matrix[:, i].sum())
            actual = float(self.matrix[i, :].sum())
            precision = tp / predicted if predicted else 0.0
            recall = tp / actual if actual else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            metrics.append(ClassMetrics(label, precision, recall, f1, int(actual)))
        return metrics

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": "pipescale.bottleneck_report.v1",
            "params": self.params,
            "columns": list(self.columns),
            "rows": list(LABELS),
            "confusion_matrix": self.matrix.astype(int).tolist(),
            "per_class": [m.to_dict() for m in self.per_class()],
            "accuracy": self.accuracy,
            "n": self.n,
        }

    def format_table(self) -> str:
        """Per-class precision and recall as a plain-text table."""
        lines = [f"{'Class':<16} {'Precision':>9} {'Recall':>7} {'F1':>6} {'Support':>8}"]
        for m in self.per_class():
            lines.append(
                f"{m.label:<16} {m.precision:>9.2f} {m.recall:>7.2f} {m.f1:>6.2f} "
                f"{m.support:>8d}"
            )
        lines.append(f"{'Accuracy':<16} {self.accuracy:>9.2f} {'':>7} {'':>6} {self.n:>8d}")
        return "\n".join(lines)


def confusion_report(
    truth: Sequence[str], predicted: Sequence[str], params: dict[str, Any] | None = None
) -> BottleneckReport:
    """
    Build a report from paired labels.

    Raises:
        ValueError: On length mismatch or an unknown label
    """
    if len(truth) != len(predicted):
        raise ValueError(f"got {len(truth)} labels and {len(predicted)} predictions")
    columns = (*LABELS, UNDETECTED)
    matrix = np.zeros((len(LABELS), len(columns)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if t not in LABELS:
            raise ValueError(f"unknown ground-truth label {t!r}")
        if p not in columns:
            raise ValueError(f"unknown predicted label {p!r}")
        matrix[LABELS.index(t), columns.index(p)] += 1
    return BottleneckReport(matrix, columns, dict(params or {}))


def evaluate_bottleneck_detection(
    suite: Sequence[BottleneckCase],
    *,
    detector: Detector | None = None,
    probes_per_stage: int = 16,
    epsilon: float = BOTTLENECK_PROBE_EPSILON,
) -> BottleneckReport:
    """
    Run a detector over a labelled suite.

    Args:
        suite: Labelled scenarios
        detector: Callable mapping a case to a label; defaults to the
            forced-probe mock controller
        probes_per_stage: Expected forced probes per stage (m)
        epsilon: Probe probability per trial

    Returns:
        BottleneckReport with the 4-class confusion matrix
    """
    if probes_per_stage < 1:
        raise ValueError(f"probes_per_stage must be >= 1, got {probes_per_stage}")
    detect = detector or forced_probe_detector(probes_per_stage=probes_per_stage, epsilon=epsilon)
    truth = [case.label for case in suite]
    predicted = [detect(case) for case in suite]
    params = {
        "scenarios": len(suite),
        "probes_per_stage": probes_per_stage,
        "epsilon": epsilon,
        "detector": "forced_probe" if detector is None else getattr(detector, "__name__", "custom"),
    }
    return confusion_report(truth, predicted, params)
