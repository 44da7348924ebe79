"""
Diagnostics for the decision loop.

RegretAccounting decomposes per-round regret against the rollout oracle
into a coverage gap (the best action was not among the retrieved ones)
and a selection error (the policy did not pick the best retrieved one),
and checks the cumulative bound

    sum(regret) <= sum((1 - eps_t) * (xi_t + eta_t+)) + (sum(eps_t) + delta * T) * R_max

delta is estimated on its own, as the share of policy rounds whose executed
action fell outside the retrieved action set. On those rounds the selection
error is not confined to the retrieved actions. The bound can therefore
fail; the per-round residual that would be needed to close it is reported
separately and never enters the check.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .experience import ExperienceBuffer


@dataclass(frozen=True)
class RegretRow:
    """
    Per-round regret terms.

    in_support is False when a policy round executed an action outside the
    retrieved set. residual is the uncovered part of this round's regret in
    units of r_max.
    """

    round: int
    regret: float
    xi: float
    eta: float
    epsilon: float
    probe: bool
    in_support: bool
    residual: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "regret": self.regret,
            "xi": self.xi,
            "eta": self.eta,
            "epsilon": self.epsilon,
            "probe": self.probe,
            "in_support": self.in_support,
            "residual": self.residual,
        }


@dataclass
class RegretAccounting:
    """
    Running regret decomposition.

    Attributes:
        r_max: Reward clip bound
        rows: One entry per oracle-scored round
    """

    r_max: float
    rows: list[RegretRow] = field(default_factory=list)

    def record(
        self,
        round_index: int,
        *,
        oracle_reward: float,
        best_retrieved_reward: float,
        executed_reward: float,
        epsilon: float,
        probe: bool,
        in_support: bool = True,
    ) -> RegretRow:
        """
        Add one round.

        xi = oracle - best retrieved. eta = best retrieved - executed on
        policy rounds; probe rounds carry no selection error and are always
        in support.
        """
        regret = oracle_reward - executed_reward
        xi = oracle_reward - best_retrieved_reward
        eta = 0.0 if probe else best_retrieved_reward - executed_reward
        covered = (1.0 - epsilon) * (xi + max(eta, 0.0)) + epsilon * self.r_max
        residual = max(0.0, regret - covered) / self.r_max
        row = RegretRow(
            round_index, regret, xi, eta, epsilon, probe, probe or in_support, residual
        )
        self.rows.append(row)
        return row

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def cumulative_regret(self) -> float:
        return sum(r.regret for r in self.rows)

    @property
    def policy_rounds(self) -> int:
        return sum(1 for r in self.rows if not r.probe)

    @property
    def delta_hat(self) -> float:
        """Share of policy rounds that left the retrieved action set."""
        if self.policy_rounds == 0:
            return 0.0
        misses = sum(1 for r in self.rows if not r.in_support)
        return misses / self.policy_rounds

    @property
    def closing_residual(self) -> float:
        """Failure mass, in units of r_max, that would close the bound round by round."""
        return sum(r.residual for r in self.rows)

    @property
    def epsilon_mass(self) -> float:
        return sum(r.epsilon for r in self.rows)

    def bound(self) -> float:
        """Right-hand side of the cumulative regret bound."""
        coverage = sum((1.0 - r.epsilon) * (r.xi + max(r.eta, 0.0)) for r in self.rows)
        failure = self.delta_hat * len(self.rows)
        return coverage + (self.epsilon_mass + failure) * self.r_max

    def holds(self, tolerance: float = 1e-9) -> bool:
        return self.cumulative_regret <= self.bound() + tolerance

    def mean_xi(self, start: int = 0, stop: int | None = None) -> float:
        window = self.rows[start:stop]
        return float(np.mean([r.xi for r in window])) if window else math.nan

    def mean_regret(self, start: int = 0, stop: int | None = None) -> float:
        window = self.rows[start:stop]
        return float(np.mean([r.regret for r in window])) if window else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "rounds": len(self.rows),
            "cumulative_regret": self.cumulative_regret,
            "bound": self.bound() if self.rows else 0.0,
            "delta_hat": self.delta_hat,
            "closing_residual": self.closing_residual,
            "epsilon_mass": self.epsilon_mass,
            "mean_xi": self.mean_xi() if self.rows else None,
            "holds": self.holds(),
        }


def gaussian_posterior_kl(
    residual: float, n: int = 10, *, noise_var: float = 1.0, prior_var: float = 1.0
) -> float:
    """
    Bayesian surprise of one observation under a conjugate Gaussian model.

    Rewards are N(mu, noise_var) with prior mu ~ N(mu_0, prior_var). With
    n - 1 other observations the posterior over mu has variance s_prev;
    adding an observation whose residual against the leave-one-out
    posterior mean is `residual` gives variance s_n and shifts the mean by
    (s_n / noise_var) * residual. Returns KL(posterior with it || posterior
    without it).

    Raises:
        ValueError: If n < 1 or a variance is not positive
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if noise_var <= 0 or prior_var <= 0:
        raise ValueError("variances must be > 0")
    s_prev = 1.0 / (1.0 / prior_var + (n - 1) / noise_var)
    s_n = 1.0 / (1.0 / prior_var + n / noise_var)
    shift = s_n / noise_var * residual
    return 0.5 * (math.log(s_prev / s_n) + (s_n + shift**2) / s_prev - 1.0)


def coverage_distance(buffer: ExperienceBuffer, x_curr: Sequence[float]) -> float:
    """
    Distance from x_curr to the nearest stored context, in standardized
    units. Infinite for an empty buffer.
    """
    if len(buffer) == 0:
        return math.inf
    z = buffer.standardize(buffer.contexts())
    zc = buffer.standardize(x_curr)
    return float(np.min(np.linalg.norm(z - zc[None, :], axis=1)))
