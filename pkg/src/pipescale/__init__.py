"""
pipescale – Simulator-backed in-context autoscaling for multi-stage inference pipelines.

A discrete-event tandem-queue simulator stands in for a container
orchestrator; an epsilon-greedy agent retrieves past scaling episodes from
an experience buffer and asks a policy backend (a deterministic mock or a
chat-completion LLM) for the next allocation.

Public API:
- PipelineSimulator, StageSpec, ResourceConfig: pipeline model
- TokenBucket: fractional GPU rate control
- compute_reward(...) -> RewardBreakdown: Pareto-shaped reward
- ExperienceBuffer, select_experiences(...): experience store and retrieval
- validate(...) -> ScalingAction: grid projection and safety checks
- decide(...) -> Decision: probe-or-policy decision step
- make_controller(config): HPA, threshold, VPA and static baselines
- run_experiment(scenario) -> ExperimentResult: full decision loop
- evaluate_bottleneck_detection(suite) -> BottleneckReport

Artifact export (CSV, JSON, plots) lives in pipescale.export and sweeps
in pipescale.sweep.
"""

__version__ = "0.1.0"

# Public API exports
from .actions import CooldownState, ScalingAction, StageDelta, validate
from .baselines import BaselineConfig, make_controller
from .bottleneck import evaluate_bottleneck_detection, generate_suite
from .cost import CostModel, cost
from .experience import Experience, ExperienceBuffer, SelectionConfig, select_experiences
from .harness import EpisodeLog, ExperimentResult, replay, run_experiment
from .oracle import oracle_best_action
from .pareto import ParetoFrontier, update_frontier
from .policy import ExplorationSchedule, MockPolicy, decide
from .reward import RewardBreakdown, RewardConfig, compute_reward
from .scenario import ControllerConfig, Scenario, load_scenario, three_stage_scenario
from .simulator import PipelineSimulator, PipelineState, ResourceConfig, StageSpec
from .throttle import TokenBucket
from .workload import WorkloadPattern

__all__ = [
    "PipelineSimulator",
    "PipelineState",
    "StageSpec",
    "ResourceConfig",
    "WorkloadPattern",
    "TokenBucket",
    "ParetoFrontier",
    "update_frontier",
    "RewardConfig",
    "RewardBreakdown",
    "compute_reward",
    "CostModel",
    "cost",
    "Experience",
    "ExperienceBuffer",
    "SelectionConfig",
    "select_experiences",
    "StageDelta",
    "ScalingAction",
    "CooldownState",
    "validate",
    "ExplorationSchedule",
    "MockPolicy",
    "decide",
    "BaselineConfig",
    "make_controller",
    "Scenario",
    "ControllerConfig",
    "load_scenario",
    "three_stage_scenario",
    "EpisodeLog",
    "ExperimentResult",
    "run_experiment",
    "replay",
    "oracle_best_action",
    "generate_suite",
    "evaluate_bottleneck_detection",
]
