"""
Tests for the chat-completion policy client (llm.py).

No network: every test injects a fake transport.
"""

import pytest
import requests

from pipescale.llm import (
    LLMClientConfig,
    LLMPolicy,
    PolicyBackendError,
    extract_content,
    parse_action_json,
)
from pipescale.prompt import Constraints
from pipescale.simulator import PipelineSimulator, ResourceConfig, StageSpec
from pipescale.utils import ConfigurationError
from pipescale.workload import WorkloadPattern

ENV = {
    "PIPESCALE_LLM_ENDPOINT": "http://localhost:9/v1/chat/completions",
    "PIPESCALE_LLM_MODEL": "m",
}


class FakeTransport:
    """Replays canned replies and records every request."""

    def __init__(self, *replies):
        self.replies = list(replies)
        self.requests = []

    def __call__(self, url, payload, headers, timeout):
        self.requests.append((url, payload, dict(headers), timeout))
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return {"choices": [{"message": {"content": reply}}]}


def _state():
    spec = StageSpec(id=1, kind="gpu", base_service_rate=30.0, cpu_sensitivity=0.0)
    return PipelineSimulator([spec], [ResourceConfig()], WorkloadPattern()).observe()


def _policy(transport, **overrides):
    config = LLMClientConfig.from_env(ENV, **overrides)
    return LLMPolicy(config, Constraints(sla_ms=500.0, budget_per_hour=5.0), transport)


class TestConfig:
    """Test client configuration."""

    def test_from_env(self):
        """Test that endpoint, model and key come from the environment."""
        config = LLMClientConfig.from_env({**ENV, "PIPESCALE_LLM_API_KEY": "secret"})
        assert config.model == "m"
        assert config.headers()["Authorization"] == "Bearer secret"

    def test_no_key_no_auth_header(self):
        """Test that unauthenticated endpoints send no Authorization header."""
        assert "Authorization" not in LLMClientConfig.from_env(ENV).headers()

    def test_missing_endpoint(self):
        """Test that a missing endpoint is a configuration error."""
        with pytest.raises(ConfigurationError, match="PIPESCALE_LLM_ENDPOINT"):
            LLMClientConfig.from_env({"PIPESCALE_LLM_MODEL": "m"})

    def test_invalid_timeout(self):
        """Test that the timeout must be positive."""
        with pytest.raises(ConfigurationError):
            LLMClientConfig(endpoint="http://x", model="m", timeout_s=0.0)


class TestParsing:
    """Test extraction of the action object from replies."""

    def test_plain_json(self):
        """Test a bare JSON object."""
        assert parse_action_json('{"inference": {"action": "none"}}') == {
            "inference": {"action": "none"}
        }

    def test_fenced_with_prose(self):
        """Test code fences and surrounding prose."""
        text = 'Scaling now.\n```json\n{"inference": {"replicas": 2}}\n```\nDone.'
        assert parse_action_json(text) == {"inference": {"replicas": 2}}

    def test_python_literal_fallback(self):
        """Test single-quoted Python literal syntax."""
        assert parse_action_json("{'inference': {'rate_ratio': 0.8}}") == {
            "inference": {"rate_ratio": 0.8}
        }

    def test_no_object(self):
        """Test replies without an object."""
        with pytest.raises(PolicyBackendError):
            parse_action_json("I would add a replica.")

    def test_unparseable(self):
        """Test broken JSON."""
        with pytest.raises(PolicyBackendError):
            parse_action_json('{"inference": {"replicas": }')

    def test_extract_content_requires_choices(self):
        """Test replies without choices."""
        with pytest.raises(PolicyBackendError):
            extract_content({"error": "overloaded"})


class TestPolicy:
    """Test the request/parse/retry loop."""

    def test_payload(self):
        """Test the request sent for one proposal."""
        transport = FakeTransport('{"stage_1": {"action": "none"}}')
        proposal = _policy(transport).propose(_state(), [])
        assert proposal == {"stage_1": {"action": "none"}}
        url, payload, _, timeout = transport.requests[0]
        assert url == ENV["PIPESCALE_LLM_ENDPOINT"]
        assert payload["model"] == "m"
        assert payload["stream"] is False
        assert "## Current Input" in payload["messages"][0]["content"]
        assert timeout == 10.0

    def test_retry_after_malformed(self):
        """Test that one malformed reply is re-asked with an error hint."""
        transport = FakeTransport("no idea", '{"stage_1": {"replicas": 2}}')
        proposal = _policy(transport).propose(_state(), [])
        assert proposal == {"stage_1": {"replicas": 2}}
        retry_messages = transport.requests[1][1]["messages"]
        assert retry_messages[-1]["content"].startswith("Your previous reply could not be parsed")

    def test_gives_up_with_noop(self, caplog):
        """Test that repeated malformed replies yield an empty proposal."""
        transport = FakeTransport("nope", "still nope")
        with caplog.at_level("WARNING", logger="pipescale.llm"):
            assert _policy(transport).propose(_state(), []) == {}
        assert len(transport.requests) == 2
        assert "malformed" in caplog.text

    def test_network_error(self):
        """Test that transport failures become PolicyBackendError."""
        transport = FakeTransport(requests.Timeout("deadline exceeded"))
        with pytest.raises(PolicyBackendError, match="policy request failed"):
            _policy(transport).propose(_state(), [])

    def test_audit_files(self, tmp_path):
        """Test that prompts and replies are dumped when auditing."""
        transport = FakeTransport('{"stage_1": {"action": "none"}}')
        _policy(transport, audit_dir=tmp_path).propose(_state(), [])
        assert (tmp_path / "call_00001_prompt.txt").read_text().startswith("You are")
        assert "none" in (tmp_path / "call_00001_response.txt").read_text()
