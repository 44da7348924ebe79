"""
Resource cost model.

CPU stages pay per allocated core-hour. GPU stages pay per GPU-hour:
billable cost charges whole GPUs, effective cost charges the throttled
fraction rho of each GPU (shared-GPU deployments).
"""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

from .config import PRICE_CPU_CORE_HOUR, PRICE_GPU_HOUR
from .simulator import PipelineState, ResourceConfig, StageKind
from .utils import validate_non_negative, validate_positive

CostMode = Literal["billable", "effective"]


@dataclass(frozen=True)
class CostModel:
    """
    Prices and accounting mode.

    Attributes:
        p_cpu: $ per CPU core-hour
        p_gpu: $ per GPU-hour
        mode: billable or effective
    """

    p_cpu: float = PRICE_CPU_CORE_HOUR
    p_gpu: float = PRICE_GPU_HOUR
    mode: CostMode = "effective"

    def __post_init__(self) -> None:
        validate_positive(self.p_cpu, "p_cpu")
        validate_positive(self.p_gpu, "p_gpu")
        if self.mode not in ("billable", "effective"):
            raise ValueError(f"mode must be 'billable' or 'effective', got {self.mode!r}")

    def with_mode(self, mode: CostMode) -> "CostModel":
        return CostModel(self.p_cpu, self.p_gpu, mode)


def config_cost_rate(
    kinds: Sequence[StageKind], configs: Sequence[ResourceConfig], model: CostModel
) -> float:
    """Cost rate in $/hour for a set of allocations."""
    rate = 0.0
    for kind, cfg in zip(kinds, configs):
        if kind == "cpu":
            rate += cfg.replicas * (cfg.cpu_millicores / 1000.0) * model.p_cpu
        else:
            share = cfg.gpu_rate_ratio if model.mode == "effective" else 1.0
            rate += cfg.replicas * share * model.p_gpu
    return rate


def cost_rate(state: PipelineState, model: CostModel) -> float:
    """
    Cost rate of the state's allocation, in $/hour.

    Examples:
        One GPU replica at rho=0.5 costs 1.53 $/h effective, 3.06 $/h billable.
    """
    return config_cost_rate([s.kind for s in state.stages], state.configs, model)


def cost(state: PipelineState, model: CostModel, dt: float) -> float:
    """
    Cost of holding the state's allocation for dt seconds, in $.

    Raises:
        ValueError: If dt < 0
    """
    validate_non_negative(dt, "dt")
    return cost_rate(state, model) * dt / 3600.0
