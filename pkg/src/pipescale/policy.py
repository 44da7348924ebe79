"""
Decision policies and epsilon-greedy exploration.

decide() runs one round of the decision step: with probability epsilon_t
it emits a random single-stage probe, otherwise it asks the configured
backend (the LLM policy or the deterministic mock). Backend failures never
reach the caller; they become a no-op proposal.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .actions import ScalingAction, StageDelta, action_to_proposal
from .config import (
    DEFAULT_SLA_MS,
    DELTA_C_GRID,
    DELTA_M_GRID,
    DELTA_N_GRID,
    DELTA_RHO_GRID,
    EPSILON_0,
    EPSILON_DECAY,
    EPSILON_MIN,
    GAMMA_C,
    MOCK_SCALE_DOWN_LATENCY_FRACTION,
    MOCK_SCALE_DOWN_UTIL,
    MOCK_SCALE_UP_UTIL,
    MOCK_VETO_SIMILARITY,
    N_MAX,
    N_MIN,
    RHO_MAX,
    RHO_MIN,
)
from .experience import Experience, extract_features, relative_similarity
from .simulator import PipelineState, StageState
from .types import PolicyBackend, Proposal
from .utils import GRID_TOLERANCE, ConfigurationError

logger = logging.getLogger(__name__)

_RHO_STEP = 0.1


@dataclass
class ExplorationSchedule:
    """
    Geometric epsilon decay: eps_{t+1} = max(eps_min, eps_t * decay_rate).

    Attributes:
        epsilon_0: Initial probe probability
        decay_rate: Per-round multiplier in (0, 1]
        epsilon_min: Floor
        epsilon: Current probability (starts at epsilon_0)
    """

    epsilon_0: float = EPSILON_0
    decay_rate: float = EPSILON_DECAY
    epsilon_min: float = EPSILON_MIN
    epsilon: float = field(default=math.nan)

    def __post_init__(self) -> None:
        if not (0.0 <= self.epsilon_min <= self.epsilon_0 <= 1.0):
            raise ConfigurationError(
                "need 0 <= epsilon_min <= epsilon_0 <= 1, "
                f"got epsilon_min={self.epsilon_min}, epsilon_0={self.epsilon_0}"
            )
        if not (0.0 < self.decay_rate <= 1.0):
            raise ConfigurationError(f"decay_rate must be in (0, 1], got {self.decay_rate}")
        if math.isnan(self.epsilon):
            self.epsilon = self.epsilon_0

    @classmethod
    def fixed(cls, epsilon: float) -> ExplorationSchedule:
        """Constant probe probability."""
        return cls(epsilon_0=epsilon, decay_rate=1.0, epsilon_min=epsilon)

    def decay(self) -> float:
        self.epsilon = max(self.epsilon_min, self.epsilon * self.decay_rate)
        return self.epsilon

    def decays_to_floor(self) -> int:
        """Number of decays until epsilon reaches epsilon_min."""
        if self.epsilon_0 <= self.epsilon_min:
            return 0
        if self.decay_rate >= 1.0:
            raise ValueError("a constant schedule never reaches its floor")
        return math.ceil(
            math.log(self.epsilon_min / self.epsilon_0) / math.log(self.decay_rate) - 1e-9
        )


@dataclass(frozen=True)
class Decision:
    """
    Output of one decision step.

    Attributes:
        proposal: Absolute-target proposal in the JSON action schema
        source: "probe" or the backend name
        epsilon: Probe probability used for this round
        error: Backend failure message when the proposal is a fallback no-op
    """

    proposal: Proposal
    source: str
    epsilon: float
    error: str | None = None

    @property
    def is_probe(self) -> bool:
        return self.source == "probe"


def _stage_grid(kind: str) -> list[tuple[int, int, int, float]]:
    if kind == "cpu":
        grid = product(DELTA_N_GRID, DELTA_C_GRID, DELTA_M_GRID)
        combos = [(dn, dc, dm, 0.0) for dn, dc, dm in grid]
    else:
        combos = [(dn, 0, 0, drho) for dn, drho in product(DELTA_N_GRID, DELTA_RHO_GRID)]
    return [c for c in combos if c != (0, 0, 0, 0.0)]


def random_probe(state: PipelineState, rng: np.random.Generator) -> ScalingAction:
    """
    Uniformly random single-stage action.

    The target stage is drawn uniformly, then a uniformly random non-zero
    delta from that stage's joint grid.
    """
    index = int(rng.integers(len(state.stages)))
    target = state.stages[index]
    grid = _stage_grid(target.kind)
    dn, dc, dm, drho = grid[int(rng.integers(len(grid)))]
    stages = []
    for i, s in enumerate(state.stages):
        if i == index:
            stages.append(StageDelta(s.name, s.kind, dn=dn, dc=dc, dm=dm, drho=drho))
        else:
            stages.append(StageDelta(s.name, s.kind))
    return ScalingAction(tuple(stages))


def _scale_up_delta(stage: StageState) -> dict[str, float] | None:
    cfg = stage.config
    if stage.kind == "gpu":
        if cfg.gpu_rate_ratio < RHO_MAX - GRID_TOLERANCE:
            return {"drho": _RHO_STEP}
        return {"dn": 1} if cfg.replicas < N_MAX else None
    if cfg.replicas < N_MAX:
        return {"dn": 1}
    return {"dc": GAMMA_C}


def _scale_down_delta(stage: StageState) -> dict[str, float] | None:
    cfg = stage.config
    if cfg.replicas > N_MIN:
        return {"dn": -1}
    if stage.kind == "gpu" and cfg.gpu_rate_ratio > RHO_MIN + GRID_TOLERANCE:
        return {"drho": -_RHO_STEP}
    return None


def _vetoed(
    action: ScalingAction, experiences: Sequence[Experience], x_curr: Sequence[float]
) -> bool:
    matches = [e for e in experiences if e.action.key() == action.key()]
    if not matches:
        return False
    sims = [relative_similarity(e.context, x_curr) for e in matches]
    nearest = int(np.argmax(sims))
    return sims[nearest] > MOCK_VETO_SIMILARITY and matches[nearest].reward < 0


def mock_action(
    state: PipelineState,
    experiences: Sequence[Experience] = (),
    *,
    sla_ms: float = DEFAULT_SLA_MS,
    veto_negative: bool = False,
) -> ScalingAction:
    """
    Deterministic heuristic decision as a grid action.

    The stage with the highest quota-normalized utilization (ties broken by
    demand ratio, then stage order) is scaled up when its utilization
    exceeds 0.8 or the end-to-end P99 exceeds the SLA. When every stage is
    below 0.3 utilization and P99 is under half the SLA, the least-utilized
    stage that can shrink is scaled down.

    veto_negative is for buffers that keep negative experiences (the
    store-all ablation). With it, an action whose nearest stored experience
    with the same action has similarity above 0.9 and negative reward is
    vetoed. A positive-only buffer never holds such an experience.
    """
    noop = ScalingAction.noop(state)
    if not state.stages:
        return noop
    ranked = sorted(
        range(len(state.stages)),
        key=lambda i: (-state.stages[i].utilization, -state.stages[i].demand_ratio, i),
    )
    top = state.stages[ranked[0]]

    action = noop
    if top.utilization > MOCK_SCALE_UP_UTIL or state.p99_ms > sla_ms:
        delta = _scale_up_delta(top)
        if delta is not None:
            action = ScalingAction.single_stage(state, ranked[0], **delta)
    elif (
        all(s.utilization < MOCK_SCALE_DOWN_UTIL for s in state.stages)
        and state.p99_ms < MOCK_SCALE_DOWN_LATENCY_FRACTION * sla_ms
    ):
        for index in reversed(ranked):
            delta = _scale_down_delta(state.stages[index])
            if delta is not None:
                action = ScalingAction.single_stage(state, index, **delta)
                break

    if (
        veto_negative
        and not action.is_noop
        and experiences
        and _vetoed(action, experiences, extract_features(state))
    ):
        logger.debug("mock policy: vetoed %s after a similar negative experience", action.key())
        return noop
    return action


def mock_policy(
    state: PipelineState,
    experiences: Sequence[Experience] = (),
    *,
    sla_ms: float = DEFAULT_SLA_MS,
    veto_negative: bool = False,
) -> Proposal:
    """mock_action expressed in the JSON action schema."""
    action = mock_action(state, experiences, sla_ms=sla_ms, veto_negative=veto_negative)
    return action_to_proposal(action, state)


@dataclass(frozen=True)
class MockPolicy:
    """PolicyBackend wrapper around mock_policy."""

    sla_ms: float = DEFAULT_SLA_MS
    veto_negative: bool = False
    name: str = "mock"

    def propose(self, state: PipelineState, experiences: Sequence[Experience]) -> Proposal:
        return mock_policy(
            state, experiences, sla_ms=self.sla_ms, veto_negative=self.veto_negative
        )


def decide(
    policy: PolicyBackend,
    state: PipelineState,
    experiences: Sequence[Experience],
    schedule: ExplorationSchedule,
    rng: np.random.Generator,
) -> Decision:
    """
    One epsilon-greedy decision step.

    Draws one uniform number from rng; below epsilon_t the round is a
    random probe. The schedule is decayed once per call.

    Args:
        policy: Backend consulted on non-probe rounds
        state: Current context
        experiences: Selected experiences, reward ascending
        schedule: Exploration schedule (mutated)
        rng: Exploration random stream

    Returns:
        Decision with the proposal and its source
    """
    epsilon = schedule.epsilon
    error: str | None = None
    if rng.random() < epsilon:
        proposal = action_to_proposal(random_probe(state, rng), state)
        source = "probe"
    else:
        source = policy.name
        try:
            proposal = policy.propose(state, experiences)
        except Exception as exc:  # noqa: BLE001
            error = f"{type(exc).__name__}: {exc}"
            logger.warning("policy %s failed (%s); executing no-op", policy.name, error)
            proposal = {}
        if not isinstance(proposal, Mapping):
            logger.warning(
                "policy %s returned %s instead of an object; executing no-op",
                policy.name,
                type(proposal).__name__,
            )
            error = f"non-object proposal of type {type(proposal).__name__}"
            proposal = {}
    schedule.decay()
    logger.debug("round t=%.1f source=%s epsilon=%.4f", state.t, source, epsilon)
    return Decision(proposal=dict(proposal), source=source, epsilon=epsilon, error=error)
