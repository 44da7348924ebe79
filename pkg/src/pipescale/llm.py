"""
Chat-completion client for the in-context policy.

The policy sends the rendered prompt to any OpenAI-style chat/completions
endpoint and parses the JSON action from the reply. Endpoint, model and
token come from the environment:

    PIPESCALE_LLM_ENDPOINT   full URL of the chat/completions route
    PIPESCALE_LLM_MODEL      model identifier
    PIPESCALE_LLM_API_KEY    bearer token (optional)
"""

from __future__ import annotations

import ast
import json
import logging
import os
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import requests

from .config import (
    LLM_API_KEY_ENV,
    LLM_ENDPOINT_ENV,
    LLM_MAX_RETRIES,
    LLM_MODEL_ENV,
    LLM_TEMPERATURE,
    LLM_TIMEOUT_S,
    PROMPT_TOKEN_BUDGET,
)
from .experience import Experience
from .prompt import Constraints, build_prompt
from .simulator import PipelineState
from .types import Proposal, Transport
from .utils import ConfigurationError

logger = logging.getLogger(__name__)

_FENCE = re.compile(r"```(?:json)?\s*")


class PolicyBackendError(RuntimeError):
    """Raised when the policy backend cannot produce a usable response."""


@dataclass(frozen=True)
class LLMClientConfig:
    """
    Endpoint and decoding parameters.

    Attributes:
        endpoint: chat/completions URL
        model: Model identifier sent in the payload
        api_key: Bearer token, or None for unauthenticated endpoints
        temperature: Sampling temperature, passed through
        timeout_s: Per-request deadline; must stay below the decision interval
        max_retries: Re-asks after a malformed response
        token_budget: Prompt size limit in estimated tokens
        audit_dir: Directory for per-round prompt/response dumps, or None
    """

    endpoint: str
    model: str
    api_key: str | None = None
    temperature: float = LLM_TEMPERATURE
    timeout_s: float = LLM_TIMEOUT_S
    max_retries: int = LLM_MAX_RETRIES
    token_budget: int = PROMPT_TOKEN_BUDGET
    audit_dir: Path | None = None

    def __post_init__(self) -> None:
        if not self.endpoint:
            raise ConfigurationError("LLM endpoint must be set")
        if not self.model:
            raise ConfigurationError("LLM model must be set")
        if self.timeout_s <= 0:
            raise ConfigurationError(f"timeout_s must be > 0, got {self.timeout_s}")
        if self.max_retries < 0:
            raise ConfigurationError(f"max_retries must be >= 0, got {self.max_retries}")

    @classmethod
    def from_env(
        cls, environ: Mapping[str, str] | None = None, **overrides: Any
    ) -> LLMClientConfig:
        """
        Build a config from environment variables.

        Raises:
            ConfigurationError: If the endpoint or model variable is missing
        """
        env = os.environ if environ is None else environ
        endpoint = env.get(LLM_ENDPOINT_ENV, "")
        model = env.get(LLM_MODEL_ENV, "")
        if not endpoint:
            raise ConfigurationError(f"{LLM_ENDPOINT_ENV} is not set")
        if not model:
            raise ConfigurationError(f"{LLM_MODEL_ENV} is not set")
        return cls(endpoint=endpoint, model=model, api_key=env.get(LLM_API_KEY_ENV), **overrides)

    def headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers


def requests_transport(
    url: str, payload: Mapping[str, Any], headers: Mapping[str, str], timeout: float
) -> Mapping[str, Any]:
    """POST payload as JSON and return the decoded reply."""
    resp = requests.post(url, headers=dict(headers), data=json.dumps(payload), timeout=timeout)
    resp.raise_for_status()
    data: Mapping[str, Any] = resp.json()
    return data


def extract_content(response: Mapping[str, Any]) -> str:
    """
    Message text of the first choice of a chat/completions reply.

    Raises:
        PolicyBackendError: If the reply has no choices
    """
    choices = response.get("choices") if isinstance(response, Mapping) else None
    if not choices:
        raise PolicyBackendError(f"unexpected response format: {str(response)[:200]}")
    message = choices[0].get("message", {}) if isinstance(choices[0], Mapping) else {}
    content = message.get("content", "") if isinstance(message, Mapping) else ""
    return content if isinstance(content, str) else str(content)


def parse_action_json(text: str) -> dict[str, Any]:
    """
    Best-effort extraction of the JSON action object from model output.

    Code fences and prose around the outermost {...} are ignored. Python
    literal syntax (single quotes, True/False) is accepted as a fallback.

    Raises:
        PolicyBackendError: If no JSON object can be recovered

    Examples:
        >>> parse_action_json('```json\\n{"inference": {"action": "none"}}\\n```')
        {'inference': {'action': 'none'}}
    """
    cleaned = _FENCE.sub("", text)
    start = cleaned.find("{")
    end = cleaned.rfind("}")
    if start == -1 or end <= start:
        raise PolicyBackendError(f"no JSON object in response: {text[:200]!r}")
    snippet = cleaned[start : end + 1]
    try:
        parsed = json.loads(snippet)
    except json.JSONDecodeError:
        try:
            parsed = ast.literal_eval(snippet)
        except (ValueError, SyntaxError) as exc:
            raise PolicyBackendError(f"unable to parse JSON ({exc}): {snippet[:200]!r}") from exc
    if not isinstance(parsed, dict):
        raise PolicyBackendError(f"expected a JSON object, got {type(parsed).__name__}")
    return parsed


@dataclass
class LLMPolicy:
    """
    In-context policy backed by a chat-completion endpoint.

    Network failures and timeouts raise PolicyBackendError; the decision
    loop turns them into a no-op. A malformed reply triggers up to
    max_retries re-asks with an error hint, then a no-op proposal.
    """

    config: LLMClientConfig
    constraints: Constraints
    transport: Transport = requests_transport
    name: str = "llm"
    calls: int = field(default=0, init=False)

    def propose(self, state: PipelineState, experiences: Sequence[Experience]) -> Proposal:
        bundle = build_prompt(
            state, experiences, self.constraints, token_budget=self.config.token_budget
        )
        messages: list[dict[str, str]] = bundle.messages()
        self.calls += 1
        replies: list[str] = []

        for attempt in range(self.config.max_retries + 1):
            content = self._complete(messages)
            replies.append(content)
            try:
                proposal = parse_action_json(content)
            except PolicyBackendError as exc:
                logger.warning(
                    "malformed policy response (attempt %d/%d): %s",
                    attempt + 1,
                    self.config.max_retries + 1,
                    exc,
                )
                messages = messages + [
                    {"role": "assistant", "content": content},
                    {
                        "role": "user",
                        "content": f"Your previous reply could not be parsed ({exc}). "
                        "Respond with only the JSON object.",
                    },
                ]
                continue
            self._audit(bundle.render(), replies)
            return proposal

        self._audit(bundle.render(), replies)
        return {}

    def _complete(self, messages: list[dict[str, str]]) -> str:
        payload = {
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "stream": False,
        }
        try:
            response = self.transport(
                self.config.endpoint, payload, self.config.headers(), self.config.timeout_s
            )
        except requests.RequestException as exc:
            raise PolicyBackendError(f"policy request failed: {exc}") from exc
        return extract_content(response)

    def _audit(self, prompt: str, replies: list[str]) -> None:
        if self.config.audit_dir is None:
            return
        directory = Path(self.config.audit_dir)
        directory.mkdir(parents=True, exist_ok=True)
        stem = f"call_{self.calls:05d}"
        (directory / f"{stem}_prompt.txt").write_text(prompt, encoding="utf-8")
        (directory / f"{stem}_response.txt").write_text(
            "\n---\n".join(replies), encoding="utf-8"
        )
