"""
Scenario documents.

A scenario fixes the pipeline, the workload, the controller and the run
length. It is written as YAML (JSON is accepted too):

    name: burst-3stage
    seed: 7
    rounds: 40
    sla_ms: 500
    stages:
      - {name: preprocessing, kind: cpu, base_service_rate: 20}
      - {name: inference, kind: gpu, base_service_rate: 30, rate_ratio: 0.5}
      - {name: postprocessing, kind: cpu, base_service_rate: 40}
    workload: {kind: burst, base_rate: 10, burst_amplitude: 3}
    controller: {kind: sair, policy: mock}

Every omitted key falls back to the defaults in config.py. Validation is
complete before any simulation starts; problems raise ScenarioError
naming the offending key.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Literal

import yaml

from .baselines import BASELINE_KINDS, BaselineConfig
from .config import (
    DECISION_INTERVAL_S,
    DEFAULT_SLA_MS,
    EPSILON_0,
    EPSILON_DECAY,
    EPSILON_MIN,
    N_MAX,
    PROACTIVE_ALPHA,
    R_MAX,
    R_MIN,
    RHO_MAX,
    SETTLING_WINDOW_S,
    SIM_DT_S,
    STARTUP_DELAY_S,
    W_COST,
    W_LATENCY,
    W_PROACTIVE,
)
from .cost import CostModel, config_cost_rate
from .experience import SelectionConfig
from .reward import RewardConfig
from .simulator import ResourceConfig, StageSpec, name_stages
from .workload import WorkloadPattern

ControllerKind = Literal["sair", "static", "hpa_cpu", "threshold", "vpa"]
CONTROLLER_KINDS: tuple[str, ...] = ("sair", *BASELINE_KINDS)
POLICY_KINDS = ("mock", "llm")


class ScenarioError(ValueError):
    """Raised when a scenario document is invalid."""


def _without_id(data: dict[str, Any]) -> dict[str, Any]:
    # Stage ids follow list position in scenario documents.
    return {k: v for k, v in data.items() if k != "id"}


@dataclass(frozen=True)
class SAIRConfig:
    """
    In-context agent settings.

    Attributes:
        policy: mock or llm backend
        selection: Retrieval parameters
        r_min: Storage threshold
        store_all: Disable positive-only filtering
        no_icl: Give the policy no experiences
        pre_only: Only the first stage may be scaled
        epsilon_0, epsilon_decay, epsilon_min: Exploration schedule
        w_latency, w_cost, w_proactive, alpha, r_max: Reward weights
        sla_penalty: quadratic or linear
        proactive_bonus: Enable the proactive term
        c_budget: Cost normalizer in $ per interval; None derives it from
            the pipeline's maximum allocation
        audit_dir: Directory for prompt/response dumps (llm policy only)
    """

    policy: Literal["mock", "llm"] = "mock"
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    r_min: float = R_MIN
    store_all: bool = False
    no_icl: bool = False
    pre_only: bool = False
    epsilon_0: float = EPSILON_0
    epsilon_decay: float = EPSILON_DECAY
    epsilon_min: float = EPSILON_MIN
    w_latency: float = W_LATENCY
    w_cost: float = W_COST
    w_proactive: float = W_PROACTIVE
    alpha: float = PROACTIVE_ALPHA
    r_max: float = R_MAX
    sla_penalty: Literal["quadratic", "linear"] = "quadratic"
    proactive_bonus: bool = True
    c_budget: float | None = None
    audit_dir: str | None = None

    def to_dict(self) -> dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "selection"}
        data["selection"] = {
            "m": self.selection.m,
            "lambda_div": self.selection.lambda_div,
            "sigma_sim": self.selection.sigma_sim,
            "mode": self.selection.mode,
            "baseline": self.selection.baseline,
        }
        return data


@dataclass(frozen=True)
class ControllerConfig:
    """Which controller drives the run, with its settings."""

    kind: ControllerKind = "sair"
    sair: SAIRConfig = field(default_factory=SAIRConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    @property
    def label(self) -> str:
        return f"sair-{self.sair.policy}" if self.kind == "sair" else self.kind

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "sair":
            return {"kind": "sair", **self.sair.to_dict()}
        return self.baseline.to_dict()


@dataclass(frozen=True)
class Scenario:
    """
    One experiment configuration.

    Attributes:
        name: Label used in reports
        stages: Stage specifications in pipeline order
        initial: Initial allocation per stage
        workload: Arrival pattern
        controller: Controller settings
        rounds: Number of decision rounds
        seed: Simulator seed; also seeds exploration
        sla_ms: P99 latency target
        interval_s: Decision interval
        settling_s: Discarded part of each interval after actuation
        dt: Simulator step
        startup_delay_s: Replica readiness delay
        cost_model: Prices and the accounting mode used by the reward
        oracle: Run brute-force oracle rollouts every round
        oracle_replicas_only: Restrict oracle candidates to replica deltas
    """

    name: str
    stages: tuple[StageSpec, ...]
    initial: tuple[ResourceConfig, ...]
    workload: WorkloadPattern
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    rounds: int = 20
    seed: int = 0
    sla_ms: float = DEFAULT_SLA_MS
    interval_s: float = DECISION_INTERVAL_S
    settling_s: float = SETTLING_WINDOW_S
    dt: float = SIM_DT_S
    startup_delay_s: float = STARTUP_DELAY_S
    cost_model: CostModel = field(default_factory=CostModel)
    oracle: bool = False
    oracle_replicas_only: bool = False

    def __post_init__(self) -> None:
        if not self.stages:
            raise ScenarioError("stages: at least one stage is required")
        if len(self.initial) != len(self.stages):
            raise ScenarioError("initial: need one allocation per stage")
        if self.rounds < 0:
            raise ScenarioError(f"rounds must be >= 0, got {self.rounds}")
        if self.sla_ms <= 0:
            raise ScenarioError(f"sla_ms must be > 0, got {self.sla_ms}")
        if self.interval_s <= 0:
            raise ScenarioError(f"interval_s must be > 0, got {self.interval_s}")
        if not (0 <= self.settling_s < self.interval_s):
            raise ScenarioError(
                f"settling_s must be in [0, interval_s), got {self.settling_s}"
            )
        if self.dt <= 0 or self.dt > self.interval_s - self.settling_s:
            raise ScenarioError(f"dt must be in (0, interval_s - settling_s], got {self.dt}")
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise ScenarioError(f"stages: duplicate stage names {names}")
        for spec, cfg in zip(self.stages, self.initial):
            if spec.kind == "cpu" and cfg.gpu_rate_ratio != 1.0:
                raise ScenarioError(
                    f"stages: {spec.name} is a CPU stage and cannot set rate_ratio"
                )

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(s.kind for s in self.stages)

    def default_budget(self) -> float:
        """Cost of n_max replicas per stage at full GPU rate for one interval, in $."""
        ceiling = [replace(c, replicas=N_MAX, gpu_rate_ratio=RHO_MAX) for c in self.initial]
        kinds = [s.kind for s in self.stages]
        return config_cost_rate(kinds, ceiling, self.cost_model) * self.interval_s / 3600.0

    def reward_config(self) -> RewardConfig:
        sair = self.controller.sair
        return RewardConfig(
            c_budget=sair.c_budget if sair.c_budget is not None else self.default_budget(),
            sla_ms=self.sla_ms,
            w_latency=sair.w_latency,
            w_cost=sair.w_cost,
            w_proactive=sair.w_proactive,
            alpha=sair.alpha,
            r_max=sair.r_max,
            sla_penalty=sair.sla_penalty,
            proactive_bonus=sair.proactive_bonus,
            interval_s=self.interval_s,
            cost_model=self.cost_model,
        )

    def with_seed(self, seed: int) -> Scenario:
        return replace(self, seed=seed, workload=replace(self.workload, seed=seed))

    def with_controller(self, controller: ControllerConfig) -> Scenario:
        return replace(self, controller=controller)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "rounds": self.rounds,
            "sla_ms": self.sla_ms,
            "interval_s": self.interval_s,
            "settling_s": self.settling_s,
            "dt": self.dt,
            "startup_delay_s": self.startup_delay_s,
            "stages": [
                {**_without_id(s.to_dict()), **c.to_dict()}
                for s, c in zip(self.stages, self.initial)
            ],
            "workload": self.workload.to_dict(),
            "controller": self.controller.to_dict(),
            "cost": {
                "p_cpu": self.cost_model.p_cpu,
                "p_gpu": self.cost_model.p_gpu,
                "mode": self.cost_model.mode,
            },
            "oracle": {"enabled": self.oracle, "replicas_only": self.oracle_replicas_only},
        }


# ----------------------------------------------------------------------
# Parsing
# ----------------------------------------------------------------------

_STAGE_SPEC_KEYS = {
    "kind",
    "base_service_rate",
    "cpu_sensitivity",
    "memory_floor_mb",
    "queue_capacity",
    "name",
    "memory_usage_mb",
}
_STAGE_CONFIG_KEYS = {"replicas", "cpu_millicores", "memory_mb", "rate_ratio", "gpu_rate_ratio"}
_WORKLOAD_KEYS = {f.name for f in fields(WorkloadPattern)}
_SELECTION_KEYS = {f.name for f in fields(SelectionConfig)}
_SAIR_KEYS = {f.name for f in fields(SAIRConfig)}
_BASELINE_KEYS = {f.name for f in fields(BaselineConfig)}
_TOP_KEYS = {
    "name",
    "seed",
    "rounds",
    "sla_ms",
    "interval_s",
    "settling_s",
    "dt",
    "startup_delay_s",
    "stages",
    "workload",
    "controller",
    "cost",
    "oracle",
}


def _mapping(value: Any, key: str) -> Mapping[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        raise ScenarioError(f"{key}: expected a mapping, got {type(value).__name__}")
    return value


def _check_keys(data: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")


def _number(data: Mapping[str, Any], key: str, where: str, default: float) -> float:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{where}.{key}: expected a finite number, got {value!r}")
    return float(value)


def _integer(data: Mapping[str, Any], key: str, where: str, default: int) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{where}.{key}: expected an integer, got {value!r}")
    return value


def _build(factory: Any, where: str, **kwargs: Any) -> Any:
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"{where}: {exc}") from exc


def _parse_stages(raw: Any) -> tuple[tuple[StageSpec, ...], tuple[ResourceConfig, ...]]:
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("stages: expected a non-empty list")
    specs: list[StageSpec] = []
    configs: list[ResourceConfig] = []
    for i, entry in enumerate(raw, start=1):
        where = f"stages[{i - 1}]"
        data = _mapping(entry, where)
        _check_keys(data, _STAGE_SPEC_KEYS | _STAGE_CONFIG_KEYS, where)
        if "base_service_rate" not in data:
            raise ScenarioError(f"{where}.base_service_rate: required")
        spec_kwargs = {k: data[k] for k in _STAGE_SPEC_KEYS if k in data}
        specs.append(_build(StageSpec, where, id=i, **spec_kwargs))
        rho_key = "rate_ratio" if "rate_ratio" in data else "gpu_rate_ratio"
        rho = _number(data, rho_key, where, 1.0)
        configs.append(
            _build(
                ResourceConfig,
                where,
                replicas=_integer(data, "replicas", where, 1),
                cpu_millicores=_integer(data, "cpu_millicores", where, 1000),
                memory_mb=_integer(data, "memory_mb", where, 1024),
                gpu_rate_ratio=rho,
            )
        )
    return tuple(name_stages(specs)), tuple(configs)


def _parse_controller(raw: Any) -> ControllerConfig:
    data = dict(_mapping(raw, "controller"))
    kind = data.pop("kind", "sair")
    if kind not in CONTROLLER_KINDS:
        raise ScenarioError(f"controller.kind: must be one of {CONTROLLER_KINDS}, got {kind!r}")
    if kind != "sair":
        _check_keys(data, _BASELINE_KEYS - {"kind"}, "controller")
        baseline = _build(BaselineConfig, "controller", kind=kind, **data)
        return ControllerConfig(kind=kind, baseline=baseline)

    selection_raw = dict(_mapping(data.pop("selection", None), "controller.selection"))
    _check_keys(selection_raw, _SELECTION_KEYS, "controller.selection")
    _check_keys(data, _SAIR_KEYS - {"selection"}, "controller")
    if data.get("policy", "mock") not in POLICY_KINDS:
        raise ScenarioError(
            f"controller.policy: must be one of {POLICY_KINDS}, got {data.get('policy')!r}"
        )
    selection = _build(SelectionConfig, "controller.selection", **selection_raw)
    sair = _build(SAIRConfig, "controller", selection=selection, **data)
    if not (0.0 <= sair.epsilon_min <= sair.epsilon_0 <= 1.0):
        raise ScenarioError("controller: need 0 <= epsilon_min <= epsilon_0 <= 1")
    if not (0.0 < sair.epsilon_decay <= 1.0):
        raise ScenarioError(
            f"controller.epsilon_decay: must be in (0, 1], got {sair.epsilon_decay}"
        )
    if sair.sla_penalty not in ("quadratic", "linear"):
        raise ScenarioError(f"controller.sla_penalty: unknown value {sair.sla_penalty!r}")
    return ControllerConfig(kind="sair", sair=sair)


def scenario_from_dict(data: Mapping[str, Any], *, name: str = "scenario") -> Scenario:
    """
    Build and validate a Scenario from a parsed document.

    Raises:
        ScenarioError: On unknown keys, wrong types or out-of-range values
    """
    data = _mapping(data, "scenario")
    _check_keys(data, _TOP_KEYS, "scenario")
    stages, initial = _parse_stages(data.get("stages"))
    seed = _integer(data, "seed", "scenario", 0)

    workload_raw = dict(_mapping(data.get("workload"), "workload"))
    _check_keys(workload_raw, _WORKLOAD_KEYS, "workload")
    workload_raw.setdefault("seed", seed)
    workload = _build(WorkloadPattern, "workload", **workload_raw)

    cost_raw = _mapping(data.get("cost"), "cost")
    _check_keys(cost_raw, {"p_cpu", "p_gpu", "mode"}, "cost")
    cost_model = _build(CostModel, "cost", **cost_raw)

    oracle_raw = data.get("oracle", False)
    if isinstance(oracle_raw, bool):
        oracle, replicas_only = oracle_raw, False
    else:
        oracle_map = _mapping(oracle_raw, "oracle")
        _check_keys(oracle_map, {"enabled", "replicas_only"}, "oracle")
        oracle = bool(oracle_map.get("enabled", True))
        replicas_only = bool(oracle_map.get("replicas_only", False))

    return _build(
        Scenario,
        "scenario",
        name=str(data.get("name", name)),
        stages=stages,
        initial=initial,
        workload=workload,
        controller=_parse_controller(data.get("controller")),
        rounds=_integer(data, "rounds", "scenario", 20),
        seed=seed,
        sla_ms=_number(data, "sla_ms", "scenario", DEFAULT_SLA_MS),
        interval_s=_number(data, "interval_s", "scenario", DECISION_INTERVAL_S),
        settling_s=_number(data, "settling_s", "scenario", SETTLING_WINDOW_S),
        dt=_number(data, "dt", "scenario", SIM_DT_S),
        startup_delay_s=_number(data, "startup_delay_s", "scenario", STARTUP_DELAY_S),
        cost_model=cost_model,
        oracle=oracle,
        oracle_replicas_only=replicas_only,
    )


def load_scenario(path: str | Path) -> Scenario:
    """
    Load a scenario from a YAML or JSON file.

    Raises:
        ScenarioError: If the file is unreadable, not valid YAML, or invalid
    """
    target = Path(path)
    try:
        text = target.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {target}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{target}: invalid YAML ({exc})") from exc
    return scenario_from_dict(data or {}, name=target.stem)


def three_stage_scenario(
    *,
    name: str = "three-stage",
    rates: tuple[float, float, float] = (40.0, 30.0, 50.0),
    workload: WorkloadPattern | None = None,
    controller: ControllerConfig | None = None,
    rounds: int = 20,
    seed: int = 0,
    gpu_rate_ratio: float = 1.0,
    **overrides: Any,
) -> Scenario:
    """
    Preprocessing (CPU), inference (GPU), postprocessing (CPU) pipeline
    with one replica per stage.
    """
    stages = tuple(
        name_stages(
            [
                StageSpec(id=1, kind="cpu", base_service_rate=rates[0], memory_usage_mb=512),
                StageSpec(id=2, kind="gpu", base_service_rate=rates[1], cpu_sensitivity=0.0),
                StageSpec(id=3, kind="cpu", base_service_rate=rates[2], memory_usage_mb=384),
            ]
        )
    )
    initial = (
        ResourceConfig(),
        ResourceConfig(gpu_rate_ratio=gpu_rate_ratio),
        ResourceConfig(),
    )
    return Scenario(
        name=name,
        stages=stages,
        initial=initial,
        workload=workload or WorkloadPattern(kind="poisson", base_rate=15.0, seed=seed),
        controller=controller or ControllerConfig(),
        rounds=rounds,
        seed=seed,
        **overrides,
    )
