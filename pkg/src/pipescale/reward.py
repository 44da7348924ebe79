"""
Shaped reward for one decision round.

    total = clip(r_latency + r_cost + r_sla + r_proactive + r_pareto, -R_max, R_max)

r_latency   relative P99 improvement, weighted by w_L
r_cost      relative cost increase over the budget, negated, weighted by w_C
r_sla       -(L_after/T_SLA)^2 + 1 when L_after > T_SLA (or linear variant)
r_proactive SLA pressure before acting x action magnitude x w_proactive
r_pareto    dominance shaping against the frontier (see pareto.py)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

from .actions import ScalingAction
from .config import (
    DEFAULT_SLA_MS,
    DECISION_INTERVAL_S,
    L_MAX_SLA_MULTIPLE,
    PROACTIVE_ALPHA,
    R_MAX,
    W_COST,
    W_LATENCY,
    W_PROACTIVE,
)
from .cost import CostModel, cost
from .pareto import ParetoFrontier, Point, pareto_reward
from .simulator import PipelineState
from .utils import ConfigurationError

SlaPenalty = Literal["quadratic", "linear"]


@dataclass(frozen=True)
class RewardConfig:
    """
    Reward weights and normalizers.

    l_baseline doubles as the frontier latency normalizer and defaults to
    4 x sla_ms. c_budget is the cost normalizer in $ per interval.
    """

    c_budget: float
    sla_ms: float = DEFAULT_SLA_MS
    l_baseline: float | None = None
    w_latency: float = W_LATENCY
    w_cost: float = W_COST
    w_proactive: float = W_PROACTIVE
    alpha: float = PROACTIVE_ALPHA
    r_max: float = R_MAX
    sla_penalty: SlaPenalty = "quadratic"
    proactive_bonus: bool = True
    interval_s: float = DECISION_INTERVAL_S
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self) -> None:
        if self.sla_ms <= 0:
            raise ConfigurationError(f"sla_ms must be > 0, got {self.sla_ms}")
        if self.c_budget <= 0:
            raise ConfigurationError(f"c_budget must be > 0, got {self.c_budget}")
        if self.l_baseline is not None and self.l_baseline <= 0:
            raise ConfigurationError(f"l_baseline must be > 0, got {self.l_baseline}")
        if self.r_max <= 0:
            raise ConfigurationError(f"r_max must be > 0, got {self.r_max}")
        if self.interval_s <= 0:
            raise ConfigurationError(f"interval_s must be > 0, got {self.interval_s}")
        if self.sla_penalty not in ("quadratic", "linear"):
            raise ConfigurationError(
                f"sla_penalty must be 'quadratic' or 'linear', got {self.sla_penalty!r}"
            )

    @property
    def latency_normalizer(self) -> float:
        return self.l_baseline if self.l_baseline is not None else L_MAX_SLA_MULTIPLE * self.sla_ms

    def new_frontier(self) -> ParetoFrontier:
        return ParetoFrontier(l_max=self.latency_normalizer, c_max=self.c_budget)

    def to_dict(self) -> dict[str, Any]:
        return {
            "c_budget": self.c_budget,
            "sla_ms": self.sla_ms,
            "l_baseline": self.latency_normalizer,
            "w_latency": self.w_latency,
            "w_cost": self.w_cost,
            "w_proactive": self.w_proactive,
            "alpha": self.alpha,
            "r_max": self.r_max,
            "sla_penalty": self.sla_penalty,
            "proactive_bonus": self.proactive_bonus,
        }


@dataclass(frozen=True)
class RewardBreakdown:
    """Reward components for one round."""

    r_latency: float
    r_cost: float
    r_sla: float
    r_proactive: float
    r_pareto: float
    total: float
    clipped: bool
    point: Point = (0.0, 0.0)
    non_dominated: bool = False

    COMPONENTS = ("r_latency", "r_cost", "r_sla", "r_proactive", "r_pareto")

    def to_dict(self) -> dict[str, Any]:
        return {
            "r_latency": self.r_latency,
            "r_cost": self.r_cost,
            "r_sla": self.r_sla,
            "r_proactive": self.r_proactive,
            "r_pareto": self.r_pareto,
            "total": self.total,
            "clipped": self.clipped,
            "point": list(self.point),
            "non_dominated": self.non_dominated,
        }


def sla_penalty(latency_ms: float, config: RewardConfig) -> float:
    """
    SLA term: zero up to and including T_SLA, negative above it.

    Examples:
        L_after = 2 x T_SLA gives -3 under the quadratic penalty.
    """
    ratio = latency_ms / config.sla_ms
    if ratio <= 1.0:
        return 0.0
    if config.sla_penalty == "linear":
        return -(ratio - 1.0)
    return -(ratio**2) + 1.0


def proactive_magnitude(
    latency_before_ms: float, action: ScalingAction, config: RewardConfig
) -> float:
    """SLA pressure sigma times action magnitude mu times w_proactive."""
    if not config.proactive_bonus:
        return 0.0
    sigma = max(0.0, latency_before_ms / config.sla_ms - 1.0)
    return sigma * action.magnitude(config.alpha) * config.w_proactive


def score_transition(
    latency_before_ms: float,
    latency_after_ms: float,
    cost_before: float,
    cost_after: float,
    action: ScalingAction,
    frontier: ParetoFrontier,
    config: RewardConfig,
) -> RewardBreakdown:
    """
    Reward from raw before/after latency and cost.

    The frontier is read, not updated; callers insert the new operating
    point afterwards.

    Args:
        latency_before_ms: P99 of the context the action was chosen in
        latency_after_ms: P99 measured after the settling window
        cost_before: Cost of the prior allocation for one interval, $
        cost_after: Cost of the new allocation for one interval, $
        action: Executed action
        frontier: Frontier before this round's update
        config: Weights and normalizers

    Returns:
        RewardBreakdown with all components and the clipped total
    """
    r_latency = (
        config.w_latency * (latency_before_ms - latency_after_ms) / config.latency_normalizer
    )
    r_cost = -config.w_cost * (cost_after - cost_before) / config.c_budget
    r_sla = sla_penalty(latency_after_ms, config)
    r_proactive = proactive_magnitude(latency_before_ms, action, config)

    point, _ = frontier.normalize(latency_after_ms, cost_after)
    non_dominated = not frontier.is_dominated(point)
    r_pareto = pareto_reward(frontier, point)

    raw_total = r_latency + r_cost + r_sla + r_proactive + r_pareto
    total = max(-config.r_max, min(config.r_max, raw_total))
    return RewardBreakdown(
        r_latency=r_latency,
        r_cost=r_cost,
        r_sla=r_sla,
        r_proactive=r_proactive,
        r_pareto=r_pareto,
        total=total,
        clipped=total != raw_total,
        point=point,
        non_dominated=non_dominated,
    )


def compute_reward(
    before: PipelineState,
    after: PipelineState,
    action: ScalingAction,
    frontier: ParetoFrontier,
    config: RewardConfig,
) -> RewardBreakdown:
    """
    Reward for moving from before to after with action.

    Costs are the configured cost model applied to each state's allocation
    for one decision interval.
    """
    return score_transition(
        before.p99_ms,
        after.p99_ms,
        cost(before, config.cost_model, config.interval_s),
        cost(after, config.cost_model, config.interval_s),
        action,
        frontier,
        config,
    )
