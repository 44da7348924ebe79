"""
Reference controllers: Static, HPA-CPU, Threshold and VPA-like.

Each controller is grid-native (its output already lies on the action
grid) and keeps its own timers. The pure *_decide functions take the
timer state explicitly; the controller classes carry it between rounds.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Literal

from .actions import ScalingAction, StageDelta
from .config import (
    CPU_MAX_MILLICORES,
    CPU_MIN_MILLICORES,
    DELTA_C_GRID,
    DELTA_M_GRID,
    DELTA_N_GRID,
    HPA_STABILIZATION_S,
    HPA_TARGET_UTIL,
    MEMORY_MAX_MB,
    MEMORY_MIN_MB,
    N_MAX,
    N_MIN,
    THRESHOLD_COOLDOWN_S,
    THRESHOLD_CPU_MS,
    THRESHOLD_GPU_MS,
    THRESHOLD_SCALE_DOWN_FRACTION,
    VPA_HEADROOM,
    VPA_WINDOW,
)
from .simulator import PipelineState, ResourceConfig
from .types import Controller
from .utils import ConfigurationError, clamp, snap_to_grid

logger = logging.getLogger(__name__)

BaselineKind = Literal["static", "hpa_cpu", "threshold", "vpa"]
BASELINE_KINDS: tuple[str, ...] = ("static", "hpa_cpu", "threshold", "vpa")


@dataclass(frozen=True)
class BaselineConfig:
    """
    Baseline controller parameters.

    Attributes:
        kind: static, hpa_cpu, threshold or vpa
        hpa_target_util: HPA CPU utilization target in (0, 1)
        hpa_stabilization_s: Minimum time between HPA changes per stage
        threshold_cpu_ms: Stage P99 threshold for CPU stages
        threshold_gpu_ms: Stage P99 threshold for GPU stages
        threshold_cooldown_s: Minimum time between threshold changes per stage
        threshold_scale_down_fraction: Scale down below this fraction of the threshold
        vpa_headroom: Recommendation multiplier on peak usage
        vpa_window: Trailing observations considered by VPA
    """

    kind: BaselineKind = "static"
    hpa_target_util: float = HPA_TARGET_UTIL
    hpa_stabilization_s: float = HPA_STABILIZATION_S
    threshold_cpu_ms: float = THRESHOLD_CPU_MS
    threshold_gpu_ms: float = THRESHOLD_GPU_MS
    threshold_cooldown_s: float = THRESHOLD_COOLDOWN_S
    threshold_scale_down_fraction: float = THRESHOLD_SCALE_DOWN_FRACTION
    vpa_headroom: float = VPA_HEADROOM
    vpa_window: int = VPA_WINDOW

    def __post_init__(self) -> None:
        if self.kind not in BASELINE_KINDS:
            raise ConfigurationError(f"kind must be one of {BASELINE_KINDS}, got {self.kind!r}")
        if not (0.0 < self.hpa_target_util < 1.0):
            raise ConfigurationError(
                f"hpa_target_util must be in (0, 1), got {self.hpa_target_util}"
            )
        if self.threshold_cpu_ms <= 0 or self.threshold_gpu_ms <= 0:
            raise ConfigurationError("latency thresholds must be > 0")
        if not (0.0 < self.threshold_scale_down_fraction < 1.0):
            raise ConfigurationError(
                "threshold_scale_down_fraction must be in (0, 1), "
                f"got {self.threshold_scale_down_fraction}"
            )
        if self.hpa_stabilization_s < 0 or self.threshold_cooldown_s < 0:
            raise ConfigurationError("stabilization and cooldown windows must be >= 0")
        if self.vpa_headroom <= 0:
            raise ConfigurationError(f"vpa_headroom must be > 0, got {self.vpa_headroom}")
        if self.vpa_window < 1:
            raise ConfigurationError(f"vpa_window must be >= 1, got {self.vpa_window}")

    def with_overrides(self, **changes: Any) -> BaselineConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "hpa_target_util": self.hpa_target_util,
            "hpa_stabilization_s": self.hpa_stabilization_s,
            "threshold_cpu_ms": self.threshold_cpu_ms,
            "threshold_gpu_ms": self.threshold_gpu_ms,
            "threshold_cooldown_s": self.threshold_cooldown_s,
            "threshold_scale_down_fraction": self.threshold_scale_down_fraction,
            "vpa_headroom": self.vpa_headroom,
            "vpa_window": self.vpa_window,
        }


def _bounded_replica_delta(replicas: int, raw: float) -> int:
    dn = int(snap_to_grid(raw, DELTA_N_GRID))
    return int(clamp(replicas + dn, N_MIN, N_MAX)) - replicas


def _in_window(last: Mapping[str, float], name: str, now: float, window: float) -> bool:
    return now - last.get(name, -math.inf) < window


def static_decide(state: PipelineState) -> ScalingAction:
    """Static allocation: always the all-zero action."""
    return ScalingAction.noop(state)


def hpa_decide(
    state: PipelineState,
    config: BaselineConfig,
    last_change: Mapping[str, float] | None = None,
    now: float | None = None,
) -> ScalingAction:
    """
    Kubernetes-style HPA on CPU utilization.

    Per CPU stage, desired = ceil(n * u_cpu / target); the replica delta is
    snapped to the grid and kept inside [n_min, n_max]. Stages changed
    within the stabilization window are left alone. GPU stages are not
    scaled.

    Examples:
        n=2, u_cpu=0.95, target 0.70 gives desired 3, so dn=+1.
    """
    last = last_change or {}
    t = state.t if now is None else now
    stages = []
    for s in state.stages:
        if s.kind != "cpu" or _in_window(last, s.name, t, config.hpa_stabilization_s):
            stages.append(StageDelta(s.name, s.kind))
            continue
        n = s.config.replicas
        desired = max(N_MIN, math.ceil(n * s.cpu_util / config.hpa_target_util - 1e-9))
        stages.append(StageDelta(s.name, s.kind, dn=_bounded_replica_delta(n, desired - n)))
    return ScalingAction(tuple(stages))


def threshold_decide(
    state: PipelineState,
    config: BaselineConfig,
    last_change: Mapping[str, float] | None = None,
    now: float | None = None,
) -> ScalingAction:
    """
    Rule-based scaling on stage-attributed P99 (queue delay plus processing).

    Above the stage's threshold: +1 replica. Below the scale-down fraction
    of the threshold: -1 replica. Stages changed within the cooldown are
    left alone.
    """
    last = last_change or {}
    t = state.t if now is None else now
    stages = []
    for s in state.stages:
        threshold = config.threshold_gpu_ms if s.kind == "gpu" else config.threshold_cpu_ms
        dn = 0
        if not _in_window(last, s.name, t, config.threshold_cooldown_s):
            if s.p99_ms > threshold:
                dn = 1
            elif s.p99_ms < config.threshold_scale_down_fraction * threshold:
                dn = -1
            dn = _bounded_replica_delta(s.config.replicas, dn)
        stages.append(StageDelta(s.name, s.kind, dn=dn))
    return ScalingAction(tuple(stages))


def _resize_delta(
    current: int, recommendation: float, grid: Sequence[int], low: int, high: int
) -> int:
    step = int(snap_to_grid(recommendation - current, grid))
    return step if low <= current + step <= high else 0


def vpa_decide(
    state: PipelineState, config: BaselineConfig, history: Sequence[PipelineState] = ()
) -> ScalingAction:
    """
    Vertical sizing toward headroom x peak usage over a trailing window.

    history holds earlier observations (oldest first); the last
    vpa_window - 1 of them plus state form the window. Only CPU stages are
    resized, and replica counts never change.

    Examples:
        Peak CPU 1200m at a 1000m allocation recommends 1380m, so dc=+500.
    """
    window = list(history)[-(config.vpa_window - 1) :] if config.vpa_window > 1 else []
    window.append(state)
    stages = []
    for i, s in enumerate(state.stages):
        if s.kind != "cpu":
            stages.append(StageDelta(s.name, s.kind))
            continue
        samples = [w.stages[i] for w in window if len(w.stages) == len(state.stages)]
        peak_cpu = max(x.cpu_usage_millicores for x in samples)
        peak_mem = max(x.memory_usage_mb for x in samples)
        dc = _resize_delta(
            s.config.cpu_millicores,
            config.vpa_headroom * peak_cpu,
            DELTA_C_GRID,
            CPU_MIN_MILLICORES,
            CPU_MAX_MILLICORES,
        )
        dm = 0
        if peak_mem > 0:
            dm = _resize_delta(
                s.config.memory_mb,
                config.vpa_headroom * peak_mem,
                DELTA_M_GRID,
                MEMORY_MIN_MB,
                MEMORY_MAX_MB,
            )
        stages.append(StageDelta(s.name, s.kind, dc=dc, dm=dm))
    return ScalingAction(tuple(stages))


@dataclass
class StaticController:
    """Fixed allocation of one replica per stage."""

    config: BaselineConfig = field(default_factory=lambda: BaselineConfig(kind="static"))
    name: str = "static"

    def initial_configs(self, configs: Sequence[ResourceConfig]) -> tuple[ResourceConfig, ...]:
        return tuple(replace(c, replicas=1) for c in configs)

    def decide(self, state: PipelineState, now: float) -> ScalingAction:
        return static_decide(state)


@dataclass
class _TimedController:
    config: BaselineConfig
    last_change: dict[str, float] = field(default_factory=dict)

    def initial_configs(self, configs: Sequence[ResourceConfig]) -> tuple[ResourceConfig, ...]:
        return tuple(configs)

    def _record(self, action: ScalingAction, now: float) -> ScalingAction:
        for d in action.stages:
            if not d.is_noop:
                self.last_change[d.name] = now
        return action


@dataclass
class HPAController(_TimedController):
    """HPA-CPU with a per-stage stabilization window."""

    name: str = "hpa_cpu"

    def decide(self, state: PipelineState, now: float) -> ScalingAction:
        return self._record(hpa_decide(state, self.config, self.last_change, now), now)


@dataclass
class ThresholdController(_TimedController):
    """P99 threshold rules with a per-stage cooldown."""

    name: str = "threshold"

    def decide(self, state: PipelineState, now: float) -> ScalingAction:
        return self._record(threshold_decide(state, self.config, self.last_change, now), now)


@dataclass
class VPAController:
    """Peak-usage vertical sizing over a trailing window."""

    config: BaselineConfig
    name: str = "vpa"
    history: deque[PipelineState] = field(default_factory=deque)

    def initial_configs(self, configs: Sequence[ResourceConfig]) -> tuple[ResourceConfig, ...]:
        return tuple(configs)

    def decide(self, state: PipelineState, now: float) -> ScalingAction:
        action = vpa_decide(state, self.config, tuple(self.history))
        self.history.append(state)
        while len(self.history) > max(0, self.config.vpa_window - 1):
            self.history.popleft()
        return action


def make_controller(config: BaselineConfig) -> Controller:
    """
    Build the controller for config.kind.

    Raises:
        ConfigurationError: For an unknown kind
    """
    if config.kind == "static":
        return StaticController(config)
    if config.kind == "hpa_cpu":
        return HPAController(config)
    if config.kind == "threshold":
        return ThresholdController(config)
    if config.kind == "vpa":
        return VPAController(config)
    raise ConfigurationError(f"unknown baseline kind {config.kind!r}")
