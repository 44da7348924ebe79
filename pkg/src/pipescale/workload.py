"""
Workload generators for the pipeline simulator.

Three arrival patterns: steady Poisson, linear ramp and periodic bursts.
All patterns draw Poisson counts from a numpy Generator, so a burst
pattern with amplitude 1 reproduces the Poisson stream draw for draw.
"""

from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

from .utils import validate_fraction, validate_positive

WorkloadKind = Literal["poisson", "ramp", "burst"]
WORKLOAD_KINDS = ("poisson", "ramp", "burst")


@dataclass(frozen=True)
class WorkloadPattern:
    """
    Arrival pattern for the first pipeline stage.

    Attributes:
        kind: poisson, ramp or burst
        base_rate: Requests per second
        ramp_slope: Requests per second squared (ramp only)
        burst_amplitude: Rate multiplier inside burst windows (>= 1)
        burst_period_s: Length of one burst cycle
        burst_duty_cycle: Fraction of each cycle spent bursting
        seed: RNG seed for arrival draws
    """

    kind: WorkloadKind = "poisson"
    base_rate: float = 10.0
    ramp_slope: float = 0.0
    burst_amplitude: float = 1.0
    burst_period_s: float = 120.0
    burst_duty_cycle: float = 0.25
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in WORKLOAD_KINDS:
            raise ValueError(f"kind must be one of {WORKLOAD_KINDS}, got {self.kind!r}")
        validate_positive(self.base_rate, "base_rate")
        if self.burst_amplitude < 1:
            raise ValueError(f"burst_amplitude must be >= 1, got {self.burst_amplitude}")
        validate_positive(self.burst_period_s, "burst_period_s")
        validate_fraction(self.burst_duty_cycle, "burst_duty_cycle")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "base_rate": self.base_rate,
            "ramp_slope": self.ramp_slope,
            "burst_amplitude": self.burst_amplitude,
            "burst_period_s": self.burst_period_s,
            "burst_duty_cycle": self.burst_duty_cycle,
            "seed": self.seed,
        }


def in_burst(workload: WorkloadPattern, t: float) -> bool:
    """Return True if time t falls inside a burst window."""
    phase = t % workload.burst_period_s
    return phase < workload.burst_period_s * workload.burst_duty_cycle


def arrival_rate(workload: WorkloadPattern, t: float) -> float:
    """
    Instantaneous arrival rate at time t, in requests per second.

    Ramp rates are floored at zero so negative slopes eventually go idle.

    Examples:
        >>> arrival_rate(WorkloadPattern(kind="ramp", base_rate=10, ramp_slope=1), 30.0)
        40.0
    """
    if workload.kind == "ramp":
        return max(0.0, workload.base_rate + workload.ramp_slope * t)
    if workload.kind == "burst" and in_burst(workload, t):
        return workload.base_rate * workload.burst_amplitude
    return workload.base_rate


def generate_arrivals(
    workload: WorkloadPattern, t: float, dt: float, rng: np.random.Generator
) -> int:
    """
    Draw the number of arrivals in [t, t + dt).

    Args:
        workload: Arrival pattern
        t: Start of the interval, seconds
        dt: Interval length, seconds (> 0)
        rng: Arrival random stream

    Returns:
        Poisson(rate(t) * dt) request count

    Raises:
        ValueError: If dt <= 0
    """
    validate_positive(dt, "dt")
    return int(rng.poisson(arrival_rate(workload, t) * dt))
