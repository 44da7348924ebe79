"""
Brute-force oracle by simulator rollouts.

Every candidate grid action is played forward for one decision interval
on a clone of the live simulator. Clones share the random stream state,
so all candidates see the same arrivals and service draws (common random
numbers), and a rollout of the action the agent then executes reproduces
the real round exactly.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from itertools import product

from .actions import CooldownState, RawStageDelta, ScalingAction, validate
from .config import (
    DELTA_C_GRID,
    DELTA_M_GRID,
    DELTA_N_GRID,
    DELTA_RHO_GRID,
    ORACLE_MAX_CANDIDATES,
)
from .pareto import ParetoFrontier
from .reward import RewardConfig, compute_reward
from .simulator import PipelineSimulator, PipelineState

logger = logging.getLogger(__name__)


def play_round(
    sim: PipelineSimulator, action: ScalingAction, settling_s: float, interval_s: float
) -> PipelineState:
    """
    Actuate action, wait out the settling window, and observe the rest of
    the interval.

    Returns:
        State measured over the post-settling part of the interval
    """
    sim.apply_configs(action.apply_to(sim.configs))
    sim.run_for(settling_s)
    sim.reset_window()
    sim.run_for(interval_s - settling_s)
    return sim.observe()


def _stage_deltas(
    kind: str, single_dimension: bool, replicas_only: bool
) -> list[RawStageDelta]:
    if replicas_only:
        return [RawStageDelta(dn=dn) for dn in DELTA_N_GRID if dn]
    if single_dimension:
        deltas = [RawStageDelta(dn=dn) for dn in DELTA_N_GRID if dn]
        if kind == "cpu":
            deltas += [RawStageDelta(dc=dc) for dc in DELTA_C_GRID if dc]
            deltas += [RawStageDelta(dm=dm) for dm in DELTA_M_GRID if dm]
        else:
            deltas += [RawStageDelta(drho=drho) for drho in DELTA_RHO_GRID if drho]
        return deltas
    if kind == "cpu":
        return [
            RawStageDelta(dn=dn, dc=dc, dm=dm)
            for dn, dc, dm in product(DELTA_N_GRID, DELTA_C_GRID, DELTA_M_GRID)
            if dn or dc or dm
        ]
    return [
        RawStageDelta(dn=dn, drho=drho)
        for dn, drho in product(DELTA_N_GRID, DELTA_RHO_GRID)
        if dn or drho
    ]


def _validated(
    raws: Iterable[dict[str, RawStageDelta]],
    state: PipelineState,
    cooldowns: CooldownState,
    now: float,
) -> list[ScalingAction]:
    seen: set[tuple[tuple[int, int, int, float], ...]] = set()
    actions = []
    for raw in raws:
        action = validate(raw, state, cooldowns, now)
        if action.key() not in seen:
            seen.add(action.key())
            actions.append(action)
    return actions


def enumerate_candidates(
    state: PipelineState,
    cooldowns: CooldownState,
    now: float,
    *,
    replicas_only: bool = False,
    max_candidates: int = ORACLE_MAX_CANDIDATES,
) -> tuple[list[ScalingAction], bool]:
    """
    Single-stage candidate actions, validated and deduplicated.

    The no-op comes first. When the joint per-stage grid exceeds
    max_candidates, candidates are restricted to single-dimension moves.

    Returns:
        (candidates, restricted)
    """

    def build(single_dimension: bool) -> list[ScalingAction]:
        raws: list[dict[str, RawStageDelta]] = [{}]
        for s in state.stages:
            for delta in _stage_deltas(s.kind, single_dimension, replicas_only):
                raws.append({s.name: delta})
        return _validated(raws, state, cooldowns, now)

    candidates = build(single_dimension=False)
    if replicas_only or len(candidates) <= max_candidates:
        return candidates, False
    logger.debug(
        "oracle: %d joint candidates exceed %d, using single-dimension moves",
        len(candidates),
        max_candidates,
    )
    return build(single_dimension=True), True


def revalidate(
    action: ScalingAction, state: PipelineState, cooldowns: CooldownState, now: float
) -> ScalingAction:
    """Re-validate a stored action's deltas against the current state."""
    raw = {
        d.name: RawStageDelta(dn=d.dn, dc=d.dc, dm=d.dm, drho=d.drho) for d in action.stages
    }
    return validate(raw, state, cooldowns, now)


@dataclass
class RolloutCache:
    """Rollout rewards of the current round, keyed by action."""

    sim: PipelineSimulator
    state: PipelineState
    frontier: ParetoFrontier
    reward_config: RewardConfig
    settling_s: float
    interval_s: float
    rewards: dict[tuple[tuple[int, int, int, float], ...], float] = field(default_factory=dict)

    def reward(self, action: ScalingAction) -> float:
        key = action.key()
        if key not in self.rewards:
            clone = self.sim.clone()
            after = play_round(clone, action, self.settling_s, self.interval_s)
            breakdown = compute_reward(
                self.state, after, action, self.frontier, self.reward_config
            )
            self.rewards[key] = breakdown.total
        return self.rewards[key]

    def best(self, actions: Sequence[ScalingAction]) -> tuple[ScalingAction, float]:
        """Highest-reward action of a non-empty set; ties keep the earlier one."""
        if not actions:
            raise ValueError("actions must be non-empty")
        best_action = actions[0]
        best_reward = self.reward(best_action)
        for action in actions[1:]:
            r = self.reward(action)
            if r > best_reward:
                best_action, best_reward = action, r
        return best_action, best_reward


@dataclass(frozen=True)
class OracleResult:
    """Best candidate action and its rollout reward."""

    action: ScalingAction
    reward: float
    candidates: int
    restricted: bool


def oracle_best_action(
    state: PipelineState,
    sim: PipelineSimulator,
    *,
    frontier: ParetoFrontier,
    reward_config: RewardConfig,
    cooldowns: CooldownState | None = None,
    settling_s: float,
    interval_s: float,
    replicas_only: bool = False,
    cache: RolloutCache | None = None,
) -> OracleResult:
    """
    Argmax-reward candidate action for the current state.

    Each candidate is rolled forward one interval on a clone of sim; the
    live simulator is not advanced. The no-op wins ties.

    Args:
        state: Context the action is chosen in (the last observation of sim)
        sim: Live simulator
        frontier: Frontier before this round's update
        reward_config: Reward weights and normalizers
        cooldowns: Replica cooldowns to respect; None ignores cooldowns
        settling_s: Settling window
        interval_s: Decision interval
        replicas_only: Only consider replica deltas
        cache: Shared rollout cache for this round

    Returns:
        OracleResult
    """
    cooldowns = cooldowns if cooldowns is not None else CooldownState(0.0, 0.0)
    now = sim.t
    candidates, restricted = enumerate_candidates(
        state, cooldowns, now, replicas_only=replicas_only
    )
    cache = cache or RolloutCache(sim, state, frontier, reward_config, settling_s, interval_s)
    action, reward = cache.best(candidates)
    return OracleResult(
        action=action, reward=reward, candidates=len(candidates), restricted=restricted
    )

