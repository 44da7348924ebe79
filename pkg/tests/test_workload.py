"""
Tests for workload arrival patterns (workload.py).
"""

import numpy as np
import pytest

from pipescale.workload import WorkloadPattern, arrival_rate, generate_arrivals, in_burst


class TestWorkloadPattern:
    """Test pattern validation and rates."""

    def test_unknown_kind(self):
        """Test that an unknown kind is rejected."""
        with pytest.raises(ValueError, match="kind"):
            WorkloadPattern(kind="sine")

    def test_amplitude_below_one(self):
        """Test that a burst amplitude below 1 is rejected."""
        with pytest.raises(ValueError, match="burst_amplitude"):
            WorkloadPattern(kind="burst", burst_amplitude=0.5)

    def test_poisson_rate_constant(self):
        """Test that the Poisson rate does not depend on time."""
        w = WorkloadPattern(base_rate=12.0)
        assert arrival_rate(w, 0.0) == arrival_rate(w, 1000.0) == 12.0

    def test_ramp_rate(self):
        """Test linear ramp growth."""
        w = WorkloadPattern(kind="ramp", base_rate=10.0, ramp_slope=1.0)
        assert arrival_rate(w, 30.0) == 40.0

    def test_negative_ramp_floors_at_zero(self):
        """Test that a decreasing ramp never goes negative."""
        w = WorkloadPattern(kind="ramp", base_rate=10.0, ramp_slope=-1.0)
        assert arrival_rate(w, 100.0) == 0.0

    def test_burst_windows(self):
        """Test duty cycle placement of burst windows."""
        w = WorkloadPattern(
            kind="burst",
            base_rate=10.0,
            burst_amplitude=3.0,
            burst_period_s=100.0,
            burst_duty_cycle=0.25,
        )
        assert in_burst(w, 10.0)
        assert not in_burst(w, 30.0)
        assert in_burst(w, 110.0)
        assert arrival_rate(w, 10.0) == 30.0
        assert arrival_rate(w, 60.0) == 10.0


class TestGenerateArrivals:
    """Test arrival draws."""

    def test_mean_matches_rate(self):
        """Test that the empirical arrival rate matches the configured one."""
        w = WorkloadPattern(base_rate=20.0)
        rng = np.random.default_rng(0)
        total = sum(generate_arrivals(w, i * 0.1, 0.1, rng) for i in range(20_000))
        assert total / 2000.0 == pytest.approx(20.0, rel=0.02)

    def test_reproducible(self):
        """Test that equal seeds produce equal draws."""
        w = WorkloadPattern(base_rate=20.0)
        a = [generate_arrivals(w, 0.0, 0.1, np.random.default_rng(3)) for _ in range(5)]
        b = [generate_arrivals(w, 0.0, 0.1, np.random.default_rng(3)) for _ in range(5)]
        assert a == b

    def test_dt_must_be_positive(self):
        """Test that a zero step is rejected."""
        with pytest.raises(ValueError):
            generate_arrivals(WorkloadPattern(), 0.0, 0.0, np.random.default_rng(0))
