"""
Discrete scaling actions and the action validator.

Policies propose absolute targets in a JSON schema keyed by stage name:

    {"preprocessing": {"action": "scale_replicas", "replicas": 3},
     "inference": {"action": "adjust_rate", "rate_ratio": 0.7},
     "postprocessing": {"action": "none"}}

absolute_to_delta turns a proposal into raw per-stage deltas, and validate
snaps those onto the action grid, applies resource bounds and replica
cooldowns. Validation never fails: whatever comes in, the output is a
ScalingAction whose every field lies on the grid.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .config import (
    CPU_MAX_MILLICORES,
    CPU_MIN_MILLICORES,
    DELTA_C_GRID,
    DELTA_M_GRID,
    DELTA_N_GRID,
    DELTA_RHO_GRID,
    GAMMA_C,
    GAMMA_M,
    MEMORY_MAX_MB,
    MEMORY_MIN_MB,
    N_MAX,
    N_MIN,
    PROACTIVE_ALPHA,
    RHO_MAX,
    RHO_MIN,
    SCALE_DOWN_COOLDOWN_S,
    SCALE_UP_COOLDOWN_S,
)
from .simulator import PipelineState, ResourceConfig, StageKind
from .types import Proposal
from .utils import GRID_TOLERANCE, clamp, coerce_number, on_grid, snap_to_grid

logger = logging.getLogger(__name__)

CPU_ACTIONS = ("scale_replicas", "scale_resources", "scale_both", "none")
GPU_ACTIONS = ("scale_replicas", "adjust_rate", "scale_both", "none")

# Fields each action kind is allowed to change
_ACTION_FIELDS: dict[str, tuple[str, ...]] = {
    "scale_replicas": ("replicas",),
    "scale_resources": ("cpu_millicores", "memory_mb"),
    "adjust_rate": ("rate_ratio",),
    "scale_both": ("replicas", "cpu_millicores", "memory_mb", "rate_ratio"),
    "none": (),
}


@dataclass(frozen=True)
class StageDelta:
    """Grid-valued change for one stage."""

    name: str
    kind: StageKind
    dn: int = 0
    dc: int = 0
    dm: int = 0
    drho: float = 0.0

    @property
    def is_noop(self) -> bool:
        return self.dn == 0 and self.dc == 0 and self.dm == 0 and abs(self.drho) < GRID_TOLERANCE

    @property
    def is_scale_up(self) -> bool:
        """True if any dimension grows."""
        return self.dn > 0 or self.dc > 0 or self.dm > 0 or self.drho > GRID_TOLERANCE

    @property
    def is_scale_down(self) -> bool:
        return self.dn < 0 or self.dc < 0 or self.dm < 0 or self.drho < -GRID_TOLERANCE

    def on_grid(self) -> bool:
        if self.dn not in DELTA_N_GRID:
            return False
        if self.kind == "cpu":
            return self.dc in DELTA_C_GRID and self.dm in DELTA_M_GRID and self.drho == 0.0
        return self.dc == 0 and self.dm == 0 and on_grid(self.drho, DELTA_RHO_GRID)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"name": self.name, "kind": self.kind, "dn": self.dn}
        if self.kind == "cpu":
            data.update(dc=self.dc, dm=self.dm)
        else:
            data["drho"] = self.drho
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> StageDelta:
        return cls(
            name=str(data["name"]),
            kind=data["kind"],
            dn=int(data.get("dn", 0)),
            dc=int(data.get("dc", 0)),
            dm=int(data.get("dm", 0)),
            drho=float(data.get("drho", 0.0)),
        )


@dataclass(frozen=True)
class ScalingAction:
    """Per-stage grid deltas, in pipeline stage order."""

    stages: tuple[StageDelta, ...]

    @classmethod
    def noop(cls, state: PipelineState) -> ScalingAction:
        return cls(tuple(StageDelta(s.name, s.kind) for s in state.stages))

    @classmethod
    def single_stage(cls, state: PipelineState, index: int, **delta: Any) -> ScalingAction:
        """Action changing only the stage at index."""
        return cls(
            tuple(
                StageDelta(s.name, s.kind, **delta) if i == index else StageDelta(s.name, s.kind)
                for i, s in enumerate(state.stages)
            )
        )

    @property
    def is_noop(self) -> bool:
        return all(d.is_noop for d in self.stages)

    @property
    def stages_scaled(self) -> int:
        """Number of stages with any nonzero delta."""
        return sum(1 for d in self.stages if not d.is_noop)

    def stage(self, name: str) -> StageDelta:
        for d in self.stages:
            if d.name == name:
                return d
        raise KeyError(name)

    def on_grid(self) -> bool:
        return all(d.on_grid() for d in self.stages)

    def magnitude(self, alpha: float = PROACTIVE_ALPHA) -> float:
        """
        Aggregate action size mu.

        Replica changes count fully; CPU, memory and rate changes count in
        grid steps weighted by alpha, plus alpha per scaled stage.
        """
        replicas = sum(abs(d.dn) for d in self.stages)
        resources = sum(
            abs(d.dc) / GAMMA_C + abs(d.dm) / GAMMA_M + abs(d.drho) for d in self.stages
        )
        return replicas + alpha * resources + alpha * self.stages_scaled

    def key(self) -> tuple[tuple[int, int, int, float], ...]:
        """Hashable identity used to deduplicate candidate actions."""
        return tuple((d.dn, d.dc, d.dm, round(d.drho, 6)) for d in self.stages)

    def apply_to(self, configs: Sequence[ResourceConfig]) -> tuple[ResourceConfig, ...]:
        """Resulting absolute allocations, clamped to resource bounds."""
        if len(configs) != len(self.stages):
            raise ValueError(f"action has {len(self.stages)} stages, got {len(configs)} configs")
        result = []
        for d, cfg in zip(self.stages, configs):
            rho = cfg.gpu_rate_ratio
            if d.kind == "gpu":
                rho = clamp(round(rho + d.drho, 6), RHO_MIN, RHO_MAX)
            result.append(
                ResourceConfig(
                    replicas=int(clamp(cfg.replicas + d.dn, N_MIN, N_MAX)),
                    cpu_millicores=int(
                        clamp(cfg.cpu_millicores + d.dc, CPU_MIN_MILLICORES, CPU_MAX_MILLICORES)
                    ),
                    memory_mb=int(clamp(cfg.memory_mb + d.dm, MEMORY_MIN_MB, MEMORY_MAX_MB)),
                    gpu_rate_ratio=rho,
                )
            )
        return tuple(result)

    def to_dict(self) -> dict[str, Any]:
        return {"stages": [d.to_dict() for d in self.stages]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScalingAction:
        return cls(tuple(StageDelta.from_dict(d) for d in data["stages"]))


@dataclass(frozen=True)
class RawStageDelta:
    """Unvalidated per-stage deltas as real numbers."""

    dn: float = 0.0
    dc: float = 0.0
    dm: float = 0.0
    drho: float = 0.0


RawAction = dict[str, RawStageDelta]


@dataclass
class CooldownState:
    """
    Per-stage, per-direction timestamps of the last replica change.

    Only replica changes are rate limited; CPU, memory and GPU-rate
    resizing are not.
    """

    scale_up_cooldown_s: float = SCALE_UP_COOLDOWN_S
    scale_down_cooldown_s: float = SCALE_DOWN_COOLDOWN_S
    last_scale_up: dict[str, float] = field(default_factory=dict)
    last_scale_down: dict[str, float] = field(default_factory=dict)

    def scale_up_blocked(self, name: str, now: float) -> bool:
        last = self.last_scale_up.get(name, -math.inf)
        return now - last < self.scale_up_cooldown_s

    def scale_down_blocked(self, name: str, now: float) -> bool:
        last = self.last_scale_down.get(name, -math.inf)
        return now - last < self.scale_down_cooldown_s

    def record(self, action: ScalingAction, now: float) -> None:
        """
        Record executed replica changes.

        Raises:
            ValueError: If now precedes a stored timestamp
        """
        for d in action.stages:
            if d.dn > 0:
                self._stamp(self.last_scale_up, d.name, now)
            elif d.dn < 0:
                self._stamp(self.last_scale_down, d.name, now)

    @staticmethod
    def _stamp(table: dict[str, float], name: str, now: float) -> None:
        if now < table.get(name, -math.inf):
            raise ValueError(f"cooldown timestamps must be monotone for stage {name}")
        table[name] = now


def absolute_to_delta(proposal: Mapping[str, Any], current: PipelineState) -> RawAction:
    """
    Convert absolute targets into raw deltas relative to the current state.

    Missing stages and fields yield zero deltas. An "action" key limits the
    fields considered ("scale_replicas" only looks at replicas, "none"
    ignores everything); without it every present field counts. Numbers
    may arrive as strings. Unparseable fields become zero and are logged.

    Args:
        proposal: Parsed JSON proposal keyed by stage name
        current: State the deltas are relative to

    Returns:
        Raw deltas keyed by stage name
    """
    raw: RawAction = {}
    for stage in current.stages:
        entry = proposal.get(stage.name) if isinstance(proposal, Mapping) else None
        if entry is None:
            raw[stage.name] = RawStageDelta()
            continue
        if not isinstance(entry, Mapping):
            logger.warning("stage %s: proposal entry is not an object, ignoring", stage.name)
            raw[stage.name] = RawStageDelta()
            continue

        action_kind = entry.get("action", "scale_both")
        if not isinstance(action_kind, str) or action_kind not in _ACTION_FIELDS:
            logger.warning(
                "stage %s: unknown action %r, reading all fields", stage.name, action_kind
            )
            action_kind = "scale_both"
        allowed = _ACTION_FIELDS[action_kind]

        cfg = stage.config
        current_values = {
            "replicas": float(cfg.replicas),
            "cpu_millicores": float(cfg.cpu_millicores),
            "memory_mb": float(cfg.memory_mb),
            "rate_ratio": float(cfg.gpu_rate_ratio),
        }
        deltas = dict.fromkeys(current_values, 0.0)
        for key in allowed:
            if key not in entry:
                continue
            target = coerce_number(entry[key])
            if target is None:
                logger.warning(
                    "stage %s: unparseable %s=%r, using zero delta", stage.name, key, entry[key]
                )
                continue
            deltas[key] = target - current_values[key]

        raw[stage.name] = RawStageDelta(
            dn=deltas["replicas"],
            dc=deltas["cpu_millicores"] if stage.kind == "cpu" else 0.0,
            dm=deltas["memory_mb"] if stage.kind == "cpu" else 0.0,
            drho=deltas["rate_ratio"] if stage.kind == "gpu" else 0.0,
        )
    return raw


def validate(
    raw: Mapping[str, RawStageDelta],
    current: PipelineState,
    cooldowns: CooldownState,
    now: float,
) -> ScalingAction:
    """
    Clamp raw deltas onto the action grid.

    Per stage: each delta snaps to the nearest grid value (ties toward the
    smaller magnitude); replica deltas are cut so the count stays in
    [n_min, n_max]; CPU and memory steps that would leave their bounds
    become zero; rate steps that would cross [rho_min, 1] shrink to the
    exact remaining distance when that is a grid value, otherwise the
    resulting rate is clamped at execution. Replica scale-ups within the
    scale-up cooldown and scale-downs within the scale-down cooldown
    become zero. Cooldown state is read, never written.

    Args:
        raw: Raw deltas keyed by stage name (missing stages are zero)
        current: Current pipeline state
        cooldowns: Replica cooldown timestamps
        now: Current simulated time

    Returns:
        ScalingAction on the grid

    Examples:
        A raw replica delta of +3 becomes +2.
    """
    stages = []
    for stage in current.stages:
        r = raw.get(stage.name, RawStageDelta()) if isinstance(raw, Mapping) else RawStageDelta()
        cfg = stage.config

        dn = int(snap_to_grid(r.dn, DELTA_N_GRID))
        if cfg.replicas + dn > N_MAX:
            dn = N_MAX - cfg.replicas
        elif cfg.replicas + dn < N_MIN:
            dn = N_MIN - cfg.replicas
        if dn > 0 and cooldowns.scale_up_blocked(stage.name, now):
            dn = 0
        elif dn < 0 and cooldowns.scale_down_blocked(stage.name, now):
            dn = 0

        if stage.kind == "cpu":
            dc = int(snap_to_grid(r.dc, DELTA_C_GRID))
            if not (CPU_MIN_MILLICORES <= cfg.cpu_millicores + dc <= CPU_MAX_MILLICORES):
                dc = 0
            dm = int(snap_to_grid(r.dm, DELTA_M_GRID))
            if not (MEMORY_MIN_MB <= cfg.memory_mb + dm <= MEMORY_MAX_MB):
                dm = 0
            stages.append(StageDelta(stage.name, "cpu", dn=dn, dc=dc, dm=dm))
        else:
            drho = _validate_rate_delta(r.drho, cfg.gpu_rate_ratio)
            stages.append(StageDelta(stage.name, "gpu", dn=dn, drho=drho))
    return ScalingAction(tuple(stages))


def _validate_rate_delta(raw: float, rho: float) -> float:
    drho = float(snap_to_grid(raw, DELTA_RHO_GRID))
    target = rho + drho
    if RHO_MIN - GRID_TOLERANCE <= target <= RHO_MAX + GRID_TOLERANCE:
        return round(drho, 6)
    bound = RHO_MAX if target > RHO_MAX else RHO_MIN
    exact = bound - rho
    if on_grid(exact, DELTA_RHO_GRID):
        return round(exact, 6) + 0.0
    if abs(rho - bound) <= GRID_TOLERANCE:
        return 0.0
    # Partial move: keep the grid step, the resulting rate clamps at the bound.
    return round(drho, 6)


def delta_to_targets(
    delta: StageDelta, replicas: float, cpu_millicores: float, memory_mb: float, rho: float
) -> dict[str, Any]:
    """
    Absolute-target schema entry for one stage delta applied to the given
    allocation. Only changed fields are included.
    """
    if delta.is_noop:
        return {"action": "none"}
    entry: dict[str, Any] = {}
    if delta.dn:
        entry["replicas"] = int(replicas) + delta.dn
    if delta.kind == "cpu":
        if delta.dc:
            entry["cpu_millicores"] = int(cpu_millicores) + delta.dc
        if delta.dm:
            entry["memory_mb"] = int(memory_mb) + delta.dm
        resized = bool(delta.dc or delta.dm)
        if delta.dn and resized:
            kind = "scale_both"
        else:
            kind = "scale_resources" if resized else "scale_replicas"
    else:
        if abs(delta.drho) > GRID_TOLERANCE:
            entry["rate_ratio"] = round(rho + delta.drho, 6)
        rated = "rate_ratio" in entry
        if delta.dn and rated:
            kind = "scale_both"
        else:
            kind = "adjust_rate" if rated else "scale_replicas"
    return {"action": kind, **entry}


def action_to_proposal(action: ScalingAction, state: PipelineState) -> Proposal:
    """Express a delta action as absolute targets in the JSON action schema."""
    proposal: Proposal = {}
    for d in action.stages:
        cfg = state.stage(d.name).config
        proposal[d.name] = delta_to_targets(
            d, cfg.replicas, cfg.cpu_millicores, cfg.memory_mb, cfg.gpu_rate_ratio
        )
    return proposal
