"""
Prompt assembly for the in-context policy.

A prompt has three parts: past episodes (reward ascending), the current
per-stage metrics, and static constraints, followed by the expected JSON
output shape. Episodes are rendered as:

    Episode (Reward: +0.85 GOOD):
    Input:
      preprocessing: replicas=2, cpu=1000m, memory=1024MB, queue=15
        CPU_usage=78.3
      E2E Latency: p99=342ms
      Throughput: 20.0 req/s
    Prediction:
      {"preprocessing": {"action": "scale_replicas", "replicas": 3}}
    Reward: +0.85
"""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

from .actions import ScalingAction, delta_to_targets
from .config import N_MAX, PROMPT_TOKEN_BUDGET, STAGE_FEATURES
from .experience import Experience, extract_features
from .simulator import PipelineState

logger = logging.getLogger(__name__)

_STAGE_WIDTH = len(STAGE_FEATURES)

SYSTEM_PREAMBLE = "You are an autoscaling agent for a multi-stage inference pipeline."

OUTPUT_SCHEMA = """{
  "<cpu stage name>": {"action": "scale_replicas" | "scale_resources" | "scale_both" | "none",
                       "replicas": int, "cpu_millicores": int, "memory_mb": int},
  "<gpu stage name>": {"action": "scale_replicas" | "adjust_rate" | "scale_both" | "none",
                       "replicas": int, "rate_ratio": float}
}
Values are absolute targets. Omit a stage or use "none" to leave it unchanged."""


@dataclass(frozen=True)
class Constraints:
    """Static limits quoted to the policy."""

    sla_ms: float
    budget_per_hour: float
    max_gpus: int = 2
    max_cpu_cores: int = 64
    max_replicas: int = N_MAX
    startup_delay_s: float = 15.0

    def render(self) -> str:
        return "\n".join(
            (
                "Physical Constraints:",
                f"- Max replicas per stage: {self.max_replicas}",
                f"- Max GPUs: {self.max_gpus}",
                f"- Max CPU cores: {self.max_cpu_cores}",
                f"- Max cost budget: ${self.budget_per_hour:.2f}/hour",
                f"- Latency SLA: p99 <= {self.sla_ms:.0f}ms",
                "Scaling Guidelines:",
                "- Scale the most utilized stage first; it bounds end-to-end latency.",
                f"- New replicas need {self.startup_delay_s:.0f}s to become ready; "
                "GPU rate changes apply within one window.",
                "- Per step: replicas -1..+2, CPU +-500m, memory +-256MB, rate_ratio -0.1..+0.2.",
                "- Prefer raising a GPU stage's rate_ratio before adding GPU replicas.",
                "Goals:",
                "- Keep p99 latency under the SLA at the lowest cost.",
                "- Act before the SLA is violated when queues are growing.",
            )
        )


@dataclass(frozen=True)
class PromptBundle:
    """Rendered prompt parts."""

    episodes: tuple[str, ...]
    current_input: str
    constraints: str
    schema: str = OUTPUT_SCHEMA
    dropped: int = 0

    @property
    def episode_block(self) -> str:
        return "\n\n".join(self.episodes)

    def render(self) -> str:
        parts = [SYSTEM_PREAMBLE]
        if self.episodes:
            header = "## Past Episodes (ordered by reward, lowest first)\n"
            parts.append(header + self.episode_block)
        parts.append("## Current Input\n" + self.current_input)
        parts.append("## Constraints\n" + self.constraints)
        parts.append("## Output\nRespond with a single JSON object:\n" + self.schema)
        return "\n\n".join(parts) + "\n"

    def messages(self) -> list[dict[str, str]]:
        return [{"role": "user", "content": self.render()}]


def estimate_tokens(text: str) -> int:
    """Rough token count: four characters per token."""
    return (len(text) + 3) // 4


def reward_label(reward: float) -> str:
    if reward >= 0.5:
        return "GOOD"
    if reward >= 0.0:
        return "OK"
    return "BAD"


def _stage_lines(name: str, kind: str, values: Sequence[float]) -> list[str]:
    n, c, m, rho, q, u_cpu, u_gpu = values
    if kind == "gpu":
        head = f"  {name}: replicas={int(n)}, rate={rho:.2f}, queue={int(q)}"
        usage = f"    GPU_usage={u_gpu * 100:.1f}"
    else:
        head = f"  {name}: replicas={int(n)}, cpu={int(c)}m, memory={int(m)}MB, queue={int(q)}"
        usage = f"    CPU_usage={u_cpu * 100:.1f}"
    return [head, usage]


def _input_lines(names: Sequence[str], kinds: Sequence[str], context: Sequence[float]) -> list[str]:
    lines: list[str] = []
    for i, (name, kind) in enumerate(zip(names, kinds)):
        lines.extend(_stage_lines(name, kind, context[i * _STAGE_WIDTH : (i + 1) * _STAGE_WIDTH]))
    p99, throughput = context[-2], context[-1]
    lines.append(f"  E2E Latency: p99={p99:.0f}ms")
    lines.append(f"  Throughput: {throughput:.1f} req/s")
    return lines


def _prediction(action: ScalingAction, context: Sequence[float]) -> dict[str, Any]:
    prediction: dict[str, Any] = {}
    for i, d in enumerate(action.stages):
        n, c, m, rho = context[i * _STAGE_WIDTH : i * _STAGE_WIDTH + 4]
        prediction[d.name] = delta_to_targets(d, n, c, m, rho)
    return prediction


def render_episode(experience: Experience) -> str:
    """Render one experience in the episode format."""
    names = [d.name for d in experience.action.stages]
    kinds = [d.kind for d in experience.action.stages]
    reward = f"{experience.reward:+.2f}"
    lines = [f"Episode (Reward: {reward} {reward_label(experience.reward)}):", "Input:"]
    lines.extend(_input_lines(names, kinds, experience.context))
    lines.append("Prediction:")
    lines.append("  " + json.dumps(_prediction(experience.action, experience.context)))
    lines.append(f"Reward: {reward}")
    return "\n".join(lines)


def render_current_input(state: PipelineState) -> str:
    """Render the current context in the episode input format."""
    names = [s.name for s in state.stages]
    kinds = [s.kind for s in state.stages]
    return "\n".join(_input_lines(names, kinds, extract_features(state)))


def build_prompt(
    state: PipelineState,
    experiences: Sequence[Experience],
    constraints: Constraints,
    *,
    token_budget: int = PROMPT_TOKEN_BUDGET,
) -> PromptBundle:
    """
    Assemble the prompt for the current round.

    Episodes are rendered lowest reward first. When the full prompt exceeds
    token_budget, the lowest-reward episodes are dropped until it fits.

    Args:
        state: Current context
        experiences: Selected experiences (any order)
        constraints: Static limits
        token_budget: Maximum estimated prompt tokens

    Returns:
        PromptBundle
    """
    ordered = sorted(experiences, key=lambda e: (e.reward, e.round))
    episodes = [render_episode(e) for e in ordered]
    current = render_current_input(state)
    constraint_text = constraints.render()

    dropped = 0
    bundle = PromptBundle(tuple(episodes), current, constraint_text)
    while episodes and estimate_tokens(bundle.render()) > token_budget:
        episodes.pop(0)
        dropped += 1
        bundle = PromptBundle(tuple(episodes), current, constraint_text, dropped=dropped)
    if dropped:
        logger.warning("prompt over token budget: dropped %d lowest-reward episodes", dropped)
    return bundle
