"""
Type definitions and protocols for pipescale.

This module defines the interfaces that policy backends, baseline
controllers and HTTP transports implement.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from typing import TYPE_CHECKING, Any, Protocol

if TYPE_CHECKING:
    from .actions import ScalingAction
    from .experience import Experience
    from .simulator import PipelineState, ResourceConfig

# Absolute-target proposal in the JSON action schema:
# {"<stage name>": {"action": ..., "replicas": ..., "cpu_millicores": ...}}
Proposal = dict[str, dict[str, Any]]


class PolicyBackend(Protocol):
    """
    Protocol for decision policies consulted by the decision loop.

    A backend returns an absolute-target proposal. It may raise on
    failure; the caller falls back to a no-op.
    """

    name: str

    def propose(self, state: PipelineState, experiences: Sequence[Experience]) -> Proposal:
        """
        Propose absolute resource targets for the next interval.

        Args:
            state: Current pipeline context
            experiences: Selected in-context experiences, reward ascending

        Returns:
            Proposal keyed by stage name
        """
        ...


class Controller(Protocol):
    """
    Protocol for baseline controllers.

    Controllers are grid-native: their output already lies on the action
    grid, and they keep their own timers.
    """

    name: str

    def decide(self, state: PipelineState, now: float) -> ScalingAction:
        """Return the action for this round."""
        ...

    def initial_configs(self, configs: Sequence[ResourceConfig]) -> tuple[ResourceConfig, ...]:
        """Starting allocation this controller runs with."""
        ...


class Transport(Protocol):
    """Protocol for the chat-completion transport used by the LLM policy."""

    def __call__(
        self, url: str, payload: Mapping[str, Any], headers: Mapping[str, str], timeout: float
    ) -> Mapping[str, Any]:
        """POST a JSON payload and return the decoded JSON response."""
        ...
