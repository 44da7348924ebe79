"""
Tests for regret accounting and selection diagnostics (diagnostics.py).
"""

import math

import numpy as np
import pytest

from pipescale.actions import ScalingAction, StageDelta
from pipescale.diagnostics import RegretAccounting, coverage_distance, gaussian_posterior_kl
from pipescale.experience import Experience, ExperienceBuffer

ACTION = ScalingAction((StageDelta("stage_1", "cpu"),))


class TestRegretAccounting:
    """Test the per-round regret decomposition."""

    def test_decomposition(self):
        """Test coverage gap and selection error of one policy round."""
        accounting = RegretAccounting(r_max=5.0)
        row = accounting.record(
            0,
            oracle_reward=1.0,
            best_retrieved_reward=0.8,
            executed_reward=0.5,
            epsilon=0.1,
            probe=False,
        )
        assert row.regret == pytest.approx(0.5)
        assert row.xi == pytest.approx(0.2)
        assert row.eta == pytest.approx(0.3)
        assert row.residual == 0.0
        assert row.in_support

    def test_probe_has_no_selection_error(self):
        """Test that probe rounds carry eta = 0."""
        accounting = RegretAccounting(r_max=5.0)
        row = accounting.record(
            0,
            oracle_reward=1.0,
            best_retrieved_reward=1.0,
            executed_reward=0.2,
            epsilon=0.15,
            probe=True,
        )
        assert row.eta == 0.0

    def test_uncovered_exploration_round_breaks_bound(self):
        """Test that a costly exploration round with no epsilon mass violates the bound."""
        accounting = RegretAccounting(r_max=1.0)
        accounting.record(
            0,
            oracle_reward=2.0,
            best_retrieved_reward=2.0,
            executed_reward=0.0,
            epsilon=0.0,
            probe=True,
        )
        assert accounting.delta_hat == 0.0
        assert accounting.bound() == pytest.approx(0.0)
        assert not accounting.holds()
        assert accounting.closing_residual == pytest.approx(2.0)
        assert accounting.to_dict()["holds"] is False

    @pytest.mark.parametrize("in_support, expected", [(True, False), (False, True)])
    def test_out_of_support_round_widens_bound(self, in_support, expected):
        """Test that leaving the retrieved set adds failure mass to the bound."""
        accounting = RegretAccounting(r_max=1.0)
        accounting.record(
            0,
            oracle_reward=2.0,
            best_retrieved_reward=2.0,
            executed_reward=0.0,
            epsilon=0.0,
            probe=True,
        )
        accounting.record(
            1,
            oracle_reward=1.0,
            best_retrieved_reward=1.0,
            executed_reward=1.0,
            epsilon=0.0,
            probe=False,
            in_support=in_support,
        )
        assert accounting.delta_hat == pytest.approx(0.0 if in_support else 1.0)
        assert accounting.holds() is expected

    def test_delta_hat_counts_policy_rounds_only(self):
        """Test that the failure share is taken over policy rounds."""
        accounting = RegretAccounting(r_max=5.0)
        rounds = [
            (False, True),
            (False, False),
            (True, False),
            (False, True),
            (True, True),
            (False, True),
        ]
        for t, (probe, in_support) in enumerate(rounds):
            accounting.record(
                t,
                oracle_reward=1.0,
                best_retrieved_reward=1.0,
                executed_reward=1.0,
                epsilon=0.1,
                probe=probe,
                in_support=in_support,
            )
        assert accounting.policy_rounds == 4
        assert accounting.delta_hat == pytest.approx(0.25)

    def test_in_support_policy_rounds_always_covered(self):
        """Test that policy rounds inside the retrieved set never break the bound."""
        rng = np.random.default_rng(0)
        accounting = RegretAccounting(r_max=5.0)
        for t in range(500):
            oracle = float(rng.uniform(0, 3))
            retrieved = oracle - float(rng.exponential(0.2))
            executed = retrieved - float(rng.exponential(0.3))
            accounting.record(
                t,
                oracle_reward=oracle,
                best_retrieved_reward=retrieved,
                executed_reward=executed,
                epsilon=0.0,
                probe=False,
            )
            assert accounting.holds()
        assert accounting.closing_residual == pytest.approx(0.0)

    def test_empty(self):
        """Test the empty summary."""
        data = RegretAccounting(r_max=5.0).to_dict()
        assert data["rounds"] == 0
        assert data["holds"]
        assert data["mean_xi"] is None
        assert data["delta_hat"] == 0.0

    def test_window_means(self):
        """Test windowed mean regret."""
        accounting = RegretAccounting(r_max=5.0)
        for t, regret in enumerate([1.0, 1.0, 0.0, 0.0]):
            accounting.record(
                t,
                oracle_reward=regret,
                best_retrieved_reward=regret,
                executed_reward=0.0,
                epsilon=0.0,
                probe=False,
            )
        assert accounting.mean_regret(0, 2) == pytest.approx(1.0)
        assert accounting.mean_regret(2) == pytest.approx(0.0)
        assert math.isnan(accounting.mean_xi(10))


class TestBayesianSurprise:
    """Test the conjugate Gaussian surprise model."""

    def test_monotone_in_squared_residual(self):
        """Test that KL grows with the squared residual."""
        residuals = np.linspace(0.0, 3.0, 31)
        values = [gaussian_posterior_kl(float(r)) for r in residuals]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_symmetric(self):
        """Test that KL depends on the residual only through its square."""
        assert gaussian_posterior_kl(1.5) == pytest.approx(gaussian_posterior_kl(-1.5))

    def test_invalid(self):
        """Test parameter validation."""
        with pytest.raises(ValueError):
            gaussian_posterior_kl(1.0, n=0)
        with pytest.raises(ValueError):
            gaussian_posterior_kl(1.0, noise_var=0.0)


class TestCoverage:
    """Test nearest-experience coverage."""

    def test_empty_buffer(self):
        """Test that an empty buffer has infinite coverage distance."""
        assert coverage_distance(ExperienceBuffer(), [0.0, 0.0]) == math.inf

    def test_coverage_improves_with_buffer_size(self):
        """Test that nearest-experience distance shrinks as the buffer grows."""
        rng = np.random.default_rng(1)
        small, large = [], []
        for _ in range(50):
            buffer = ExperienceBuffer()
            for i in range(512):
                context = tuple(float(v) for v in rng.uniform(0, 1, size=2))
                buffer.store(Experience(context, ACTION, 1.0, i))
                if i + 1 in (32, 512):
                    query = rng.uniform(0, 1, size=2)
                    (small if i + 1 == 32 else large).append(coverage_distance(buffer, query))
        assert np.mean(large) < np.mean(small)
