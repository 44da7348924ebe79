"""
Experiment runner.

run_experiment() drives one scenario through the decision loop:

    observe x_t -> select experiences -> decide (probe or policy)
    -> validate -> actuate -> settle -> measure -> reward
    -> store (if reward > r_min) -> update frontier -> decay epsilon

Baseline controllers run through the same loop without retrieval or
storage, so their logs share the schema. With the oracle enabled, every
round is also scored against brute-force rollouts for regret accounting.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .actions import (
    CooldownState,
    ScalingAction,
    StageDelta,
    absolute_to_delta,
    validate,
)
from .baselines import make_controller
from .cost import config_cost_rate, cost
from .diagnostics import RegretAccounting
from .experience import (
    Experience,
    ExperienceBuffer,
    extract_features,
    select_experiences,
)
from .llm import LLMClientConfig, LLMPolicy
from .oracle import RolloutCache, enumerate_candidates, play_round, revalidate
from .pareto import ParetoFrontier, update_frontier
from .policy import ExplorationSchedule, MockPolicy, decide
from .prompt import Constraints
from .reward import RewardBreakdown, RewardConfig, score_transition
from .scenario import Scenario
from .simulator import PipelineSimulator, PipelineState, ResourceConfig
from .types import Controller, PolicyBackend

logger = logging.getLogger(__name__)

_STAGE_WIDTH = 7


@dataclass(frozen=True)
class RoundRecord:
    """
    One decision round.

    Attributes:
        round: Round index from 0
        t: Simulated time at decision
        source: probe, mock, llm or a baseline name
        epsilon: Probe probability used
        context: Feature vector the action was chosen in
        action: Executed (validated) action
        reward: Reward breakdown
        p99_ms: End-to-end P99 after settling
        mean_latency_ms: Mean latency after settling
        throughput_rps: Completions per second after settling
        billable_cost: Billable cost of the interval, $
        effective_cost: Effective cost of the interval, $
        configs: Allocation during the interval
        stored: Whether the experience entered the buffer
        retrieved: Number of experiences given to the policy
        error: Policy failure message, if the round fell back to a no-op
        oracle_action: Best rollout action, when the oracle is enabled
        oracle_reward: Its rollout reward
        xi: Coverage gap estimate
        eta: Selection error estimate
        regret: Oracle reward minus executed reward
    """

    round: int
    t: float
    source: str
    epsilon: float
    context: tuple[float, ...]
    action: ScalingAction
    reward: RewardBreakdown
    p99_ms: float
    mean_latency_ms: float
    throughput_rps: float
    billable_cost: float
    effective_cost: float
    configs: tuple[ResourceConfig, ...]
    stored: bool = False
    retrieved: int = 0
    error: str | None = None
    oracle_action: ScalingAction | None = None
    oracle_reward: float | None = None
    xi: float | None = None
    eta: float | None = None
    regret: float | None = None

    @property
    def is_probe(self) -> bool:
        return self.source == "probe"

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "t": self.t,
            "source": self.source,
            "epsilon": self.epsilon,
            "context": list(self.context),
            "action": self.action.to_dict(),
            "reward": self.reward.to_dict(),
            "p99_ms": self.p99_ms,
            "mean_latency_ms": self.mean_latency_ms,
            "throughput_rps": self.throughput_rps,
            "billable_cost": self.billable_cost,
            "effective_cost": self.effective_cost,
            "configs": [c.to_dict() for c in self.configs],
            "stored": self.stored,
            "retrieved": self.retrieved,
            "error": self.error,
            "oracle_action": self.oracle_action.to_dict() if self.oracle_action else None,
            "oracle_reward": self.oracle_reward,
            "xi": self.xi,
            "eta": self.eta,
            "regret": self.regret,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RoundRecord:
        r = data["reward"]
        oracle = data.get("oracle_action")
        return cls(
            round=int(data["round"]),
            t=float(data["t"]),
            source=str(data["source"]),
            epsilon=float(data["epsilon"]),
            context=tuple(float(v) for v in data["context"]),
            action=ScalingAction.from_dict(data["action"]),
            reward=RewardBreakdown(
                r_latency=float(r["r_latency"]),
                r_cost=float(r["r_cost"]),
                r_sla=float(r["r_sla"]),
                r_proactive=float(r["r_proactive"]),
                r_pareto=float(r["r_pareto"]),
                total=float(r["total"]),
                clipped=bool(r["clipped"]),
                point=(float(r["point"][0]), float(r["point"][1])),
                non_dominated=bool(r["non_dominated"]),
            ),
            p99_ms=float(data["p99_ms"]),
            mean_latency_ms=float(data["mean_latency_ms"]),
            throughput_rps=float(data["throughput_rps"]),
            billable_cost=float(data["billable_cost"]),
            effective_cost=float(data["effective_cost"]),
            configs=tuple(
                ResourceConfig(
                    replicas=int(c["replicas"]),
                    cpu_millicores=int(c["cpu_millicores"]),
                    memory_mb=int(c["memory_mb"]),
                    gpu_rate_ratio=float(c["gpu_rate_ratio"]),
                )
                for c in data["configs"]
            ),
            stored=bool(data.get("stored", False)),
            retrieved=int(data.get("retrieved", 0)),
            error=data.get("error"),
            oracle_action=ScalingAction.from_dict(oracle) if oracle else None,
            oracle_reward=data.get("oracle_reward"),
            xi=data.get("xi"),
            eta=data.get("eta"),
            regret=data.get("regret"),
        )


@dataclass
class EpisodeLog:
    """Per-round records of one run, in round order."""

    records: list[RoundRecord] = field(default_factory=list)

    def append(self, record: RoundRecord) -> None:
        if self.records and record.round <= self.records[-1].round:
            raise ValueError(
                f"round index must increase, got {record.round} after {self.records[-1].round}"
            )
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):  # type: ignore[no-untyped-def]
        return iter(self.records)

    def scaling_events(self) -> int:
        return sum(1 for r in self.records if not r.action.is_noop)

    def scale_ups_by_stage(self) -> Counter[str]:
        counts: Counter[str] = Counter()
        for r in self.records:
            for d in r.action.stages:
                if d.is_scale_up:
                    counts[d.name] += 1
        return counts

    def reward_totals(self) -> dict[str, float]:
        """Per-component reward sums plus the clipped total."""
        totals = {name: 0.0 for name in RewardBreakdown.COMPONENTS}
        totals["total"] = 0.0
        for r in self.records:
            for name in RewardBreakdown.COMPONENTS:
                totals[name] += getattr(r.reward, name)
            totals["total"] += r.reward.total
        return totals


@dataclass
class ExperimentResult:
    """Everything a run produces."""

    scenario: Scenario
    log: EpisodeLog
    summary: dict[str, Any]
    buffer: ExperienceBuffer
    frontier: ParetoFrontier
    accounting: RegretAccounting | None = None
    latencies_ms: list[float] = field(default_factory=list, repr=False)


def make_policy(scenario: Scenario) -> PolicyBackend:
    """
    Policy backend named by the scenario.

    Raises:
        ConfigurationError: For the llm policy without endpoint variables
    """
    sair = scenario.controller.sair
    if sair.policy == "llm":
        reward_config = scenario.reward_config()
        constraints = Constraints(
            sla_ms=scenario.sla_ms,
            budget_per_hour=reward_config.c_budget * 3600.0 / scenario.interval_s,
            startup_delay_s=scenario.startup_delay_s,
        )
        client = LLMClientConfig.from_env(audit_dir=sair.audit_dir)
        return LLMPolicy(config=client, constraints=constraints)
    # Only a buffer that admits negative rewards can feed the veto.
    return MockPolicy(sla_ms=scenario.sla_ms, veto_negative=sair.store_all or sair.r_min < 0)


def _agent_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    # Separate from the simulator's arrival and service streams.
    explore_seq, select_seq = np.random.SeedSequence([seed, 1]).spawn(2)
    return np.random.default_rng(explore_seq), np.random.default_rng(select_seq)


def _first_stage_only(action: ScalingAction) -> ScalingAction:
    return ScalingAction(
        tuple(d if i == 0 else StageDelta(d.name, d.kind) for i, d in enumerate(action.stages))
    )


def _interval_costs(
    state: PipelineState, reward_config: RewardConfig, interval_s: float
) -> tuple[float, float]:
    model = reward_config.cost_model
    return (
        cost(state, model.with_mode("billable"), interval_s),
        cost(state, model.with_mode("effective"), interval_s),
    )


def _warm_up(sim: PipelineSimulator, scenario: Scenario) -> PipelineState:
    sim.run_for(scenario.settling_s)
    sim.reset_window()
    sim.run_for(scenario.interval_s - scenario.settling_s)
    return sim.observe()


def _percentile(values: Sequence[float], p: float) -> float:
    return float(np.percentile(values, p)) if values else math.nan


def summarize(
    log: EpisodeLog,
    sim: PipelineSimulator,
    *,
    controller: str,
    buffer: ExperienceBuffer | None = None,
    frontier: ParetoFrontier | None = None,
    accounting: RegretAccounting | None = None,
) -> dict[str, Any]:
    """Run-level metrics: latency, throughput, cost per 1K requests, reward sums."""
    completions = sim.total_completions
    billable = sum(r.billable_cost for r in log.records)
    effective = sum(r.effective_cost for r in log.records)
    per_k = 1000.0 / completions if completions else math.nan
    summary: dict[str, Any] = {
        "controller": controller,
        "rounds": len(log),
        "requests_completed": completions,
        "requests_dropped": sim.total_drops,
        "p99_ms": _percentile(sim.latencies_ms, 99),
        "mean_latency_ms": float(np.mean(sim.latencies_ms)) if sim.latencies_ms else math.nan,
        "throughput_rps": completions / sim.t if sim.t > 0 else 0.0,
        "billable_cost": billable,
        "effective_cost": effective,
        "billable_cost_per_1k": billable * per_k,
        "effective_cost_per_1k": effective * per_k,
        "reward": log.reward_totals(),
        "scaling_events": log.scaling_events(),
        "scale_ups_by_stage": dict(log.scale_ups_by_stage()),
        "probe_rounds": sum(1 for r in log.records if r.is_probe),
        "final_configs": [c.to_dict() for c in sim.configs],
    }
    if buffer is not None:
        summary["buffer"] = {
            "stored": len(buffer),
            "rejected": buffer.rejected,
            "filter_rate": buffer.filter_rate,
        }
    if frontier is not None:
        summary["frontier"] = frontier.to_dict()
    if accounting is not None:
        summary["regret"] = accounting.to_dict()
    return summary


def run_experiment(
    scenario: Scenario,
    *,
    policy: PolicyBackend | None = None,
    controller: Controller | None = None,
) -> ExperimentResult:
    """
    Run one scenario for scenario.rounds decision rounds.

    The scenario is fully validated when constructed, so invalid
    configurations fail before any simulation. Identical scenarios
    (including seeds) produce identical logs.

    Args:
        scenario: Experiment configuration
        policy: Policy backend override for in-context runs
        controller: Controller override for baseline runs

    Returns:
        ExperimentResult with the episode log and run summary
    """
    if scenario.controller.kind == "sair" and controller is None:
        return _run_agent(scenario, policy or make_policy(scenario))
    return _run_baseline(scenario, controller or make_controller(scenario.controller.baseline))


def _new_simulator(scenario: Scenario, configs: Sequence[ResourceConfig]) -> PipelineSimulator:
    return PipelineSimulator(
        scenario.stages,
        configs,
        scenario.workload,
        seed=scenario.seed,
        startup_delay_s=scenario.startup_delay_s,
        dt=scenario.dt,
    )


def _run_agent(scenario: Scenario, policy: PolicyBackend) -> ExperimentResult:
    sair = scenario.controller.sair
    reward_config = scenario.reward_config()
    sim = _new_simulator(scenario, scenario.initial)
    buffer = ExperienceBuffer(r_min=-math.inf if sair.store_all else sair.r_min)
    frontier = reward_config.new_frontier()
    schedule = ExplorationSchedule(sair.epsilon_0, sair.epsilon_decay, sair.epsilon_min)
    cooldowns = CooldownState()
    explore_rng, select_rng = _agent_streams(scenario.seed)
    accounting = RegretAccounting(r_max=reward_config.r_max) if scenario.oracle else None
    log = EpisodeLog()
    restricted_warned = False

    state = _warm_up(sim, scenario)
    for index in range(scenario.rounds):
        now = sim.t
        state = state.with_frontier(frontier)
        context = extract_features(state)
        experiences: list[Experience] = []
        if not sair.no_icl:
            experiences = select_experiences(buffer, context, sair.selection, select_rng)

        decision = decide(policy, state, experiences, schedule, explore_rng)
        action = validate(absolute_to_delta(decision.proposal, state), state, cooldowns, now)
        if sair.pre_only:
            action = _first_stage_only(action)

        oracle_fields: dict[str, Any] = {}
        if accounting is not None:
            cache = RolloutCache(
                sim, state, frontier, reward_config, scenario.settling_s, scenario.interval_s
            )
            candidates, restricted = enumerate_candidates(
                state, cooldowns, now, replicas_only=scenario.oracle_replicas_only
            )
            if restricted and not restricted_warned:
                logger.warning("oracle candidates restricted to single-dimension moves")
                restricted_warned = True
            retrieved = [ScalingAction.noop(state)] + [
                revalidate(e.action, state, cooldowns, now) for e in experiences
            ]
            _, best_retrieved = cache.best(retrieved)
            best_action, best_reward = cache.best([*candidates, *retrieved, action])
            oracle_fields = {
                "oracle_action": best_action,
                "oracle_reward": best_reward,
                "executed": cache.reward(action),
                "best_retrieved": best_retrieved,
                "in_support": action in retrieved,
            }

        after = play_round(sim, action, scenario.settling_s, scenario.interval_s)
        cooldowns.record(action, now)
        c_before = cost(state, reward_config.cost_model, reward_config.interval_s)
        c_after = cost(after, reward_config.cost_model, reward_config.interval_s)
        breakdown = score_transition(
            state.p99_ms, after.p99_ms, c_before, c_after, action, frontier, reward_config
        )
        stored = buffer.store(
            Experience(context, action, breakdown.total, index, decision.source)
        )
        frontier = update_frontier(frontier, after.p99_ms, c_after)

        regret_fields: dict[str, Any] = {}
        if accounting is not None:
            if abs(oracle_fields["executed"] - breakdown.total) > 1e-9:
                logger.warning(
                    "round %d: rollout reward %.6f differs from realized %.6f",
                    index,
                    oracle_fields["executed"],
                    breakdown.total,
                )
            row = accounting.record(
                index,
                oracle_reward=oracle_fields["oracle_reward"],
                best_retrieved_reward=oracle_fields["best_retrieved"],
                executed_reward=breakdown.total,
                epsilon=decision.epsilon,
                probe=decision.is_probe,
                in_support=oracle_fields["in_support"],
            )
            regret_fields = {
                "oracle_action": oracle_fields["oracle_action"],
                "oracle_reward": oracle_fields["oracle_reward"],
                "xi": row.xi,
                "eta": row.eta,
                "regret": row.regret,
            }

        billable, effective = _interval_costs(after, reward_config, scenario.interval_s)
        log.append(
            RoundRecord(
                round=index,
                t=now,
                source=decision.source,
                epsilon=decision.epsilon,
                context=context,
                action=action,
                reward=breakdown,
                p99_ms=after.p99_ms,
                mean_latency_ms=after.mean_latency_ms,
                throughput_rps=after.throughput_rps,
                billable_cost=billable,
                effective_cost=effective,
                configs=after.configs,
                stored=stored,
                retrieved=len(experiences),
                error=decision.error,
                **regret_fields,
            )
        )
        logger.debug(
            "round %d source=%s reward=%.3f p99=%.1fms",
            index,
            decision.source,
            breakdown.total,
            after.p99_ms,
        )
        state = after

    summary = summarize(
        log,
        sim,
        controller=scenario.controller.label,
        buffer=buffer,
        frontier=frontier,
        accounting=accounting,
    )
    return ExperimentResult(
        scenario, log, summary, buffer, frontier, accounting, list(sim.latencies_ms)
    )


def _run_baseline(scenario: Scenario, controller: Controller) -> ExperimentResult:
    reward_config = scenario.reward_config()
    sim = _new_simulator(scenario, controller.initial_configs(scenario.initial))
    frontier = reward_config.new_frontier()
    log = EpisodeLog()

    state = _warm_up(sim, scenario)
    for index in range(scenario.rounds):
        now = sim.t
        context = extract_features(state)
        action = controller.decide(state, now)
        after = play_round(sim, action, scenario.settling_s, scenario.interval_s)
        c_after = cost(after, reward_config.cost_model, reward_config.interval_s)
        breakdown = score_transition(
            state.p99_ms,
            after.p99_ms,
            cost(state, reward_config.cost_model, reward_config.interval_s),
            c_after,
            action,
            frontier,
            reward_config,
        )
        frontier = update_frontier(frontier, after.p99_ms, c_after)
        billable, effective = _interval_costs(after, reward_config, scenario.interval_s)
        log.append(
            RoundRecord(
                round=index,
                t=now,
                source=controller.name,
                epsilon=0.0,
                context=context,
                action=action,
                reward=breakdown,
                p99_ms=after.p99_ms,
                mean_latency_ms=after.mean_latency_ms,
                throughput_rps=after.throughput_rps,
                billable_cost=billable,
                effective_cost=effective,
                configs=after.configs,
            )
        )
        state = after

    summary = summarize(log, sim, controller=controller.name, frontier=frontier)
    return ExperimentResult(
        scenario, log, summary, ExperienceBuffer(), frontier, None, list(sim.latencies_ms)
    )


# ----------------------------------------------------------------------
# Re-scoring
# ----------------------------------------------------------------------


def _configs_from_context(context: Sequence[float], stages: int) -> list[ResourceConfig]:
    configs = []
    for i in range(stages):
        n, c, m, rho = context[i * _STAGE_WIDTH : i * _STAGE_WIDTH + 4]
        configs.append(
            ResourceConfig(
                replicas=int(n), cpu_millicores=int(c), memory_mb=int(m), gpu_rate_ratio=rho
            )
        )
    return configs


def replay(records: Iterable[RoundRecord], reward_config: RewardConfig) -> list[RewardBreakdown]:
    """
    Re-score a logged run under a different reward configuration.

    Costs are recomputed from the logged allocations with the config's
    cost model, and the frontier is rebuilt from the logged operating
    points in round order.

    Args:
        records: Logged rounds in order
        reward_config: Configuration to score with

    Returns:
        One RewardBreakdown per record
    """
    frontier = reward_config.new_frontier()
    scored: list[RewardBreakdown] = []
    for record in records:
        kinds = [d.kind for d in record.action.stages]
        before = _configs_from_context(record.context, len(kinds))
        after = record.configs
        scale = reward_config.interval_s / 3600.0
        c_before = config_cost_rate(kinds, before, reward_config.cost_model) * scale
        c_after = config_cost_rate(kinds, after, reward_config.cost_model) * scale
        latency_before = record.context[-2]
        breakdown = score_transition(
            latency_before,
            record.p99_ms,
            c_before,
            c_after,
            record.action,
            frontier,
            reward_config,
        )
        scored.append(breakdown)
        frontier = update_frontier(frontier, record.p99_ms, c_after)
    return scored

