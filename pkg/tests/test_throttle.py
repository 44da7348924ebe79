"""
Tests for simulated token-bucket GPU rate control (throttle.py).
"""

import pytest

from pipescale.throttle import (
    TokenBucket,
    quota_utilization,
    refill,
    set_rate,
    try_launch,
)
from pipescale.utils import ConfigurationError


def _saturate(bucket: TokenBucket, windows: int, size: float = 10.0) -> float:
    """Keep the bucket backlogged for a number of windows; return admitted work."""
    for _ in range(windows):
        while try_launch(bucket, size).admitted:
            pass
        refill(bucket)
    return bucket.admitted_total


class TestTokenBucketBasics:
    """Test admission and blocking."""

    def test_initial_balance_is_grant(self):
        """Test that a new bucket starts with one window's grant."""
        bucket = TokenBucket(rate_ratio=0.5)
        assert bucket.tokens == pytest.approx(500.0)

    def test_admit_then_block(self):
        """Test that launches block once the balance is exhausted."""
        bucket = TokenBucket(rate_ratio=0.1)
        assert try_launch(bucket, 60.0).admitted
        result = try_launch(bucket, 60.0)
        assert result.blocked and not result.admitted
        assert bucket.blocked_count == 1

    def test_refill_admits_fifo(self):
        """Test that blocked kernels complete in arrival order after a refill."""
        bucket = TokenBucket(rate_ratio=0.1)
        try_launch(bucket, 100.0)
        try_launch(bucket, 50.0)
        try_launch(bucket, 30.0)
        refill(bucket)
        assert bucket.completed_kernels[:3] == [0, 1, 2]

    def test_balance_never_negative(self):
        """Test that tokens stay within [0, t_max]."""
        bucket = TokenBucket(rate_ratio=0.3)
        for _ in range(50):
            try_launch(bucket, 37.0)
            assert 0.0 <= bucket.tokens <= bucket.t_max
        refill(bucket)
        assert 0.0 <= bucket.tokens <= bucket.t_max

    def test_no_carry_over(self):
        """Test that unused tokens are discarded at refill."""
        bucket = TokenBucket(rate_ratio=0.5)
        refill(bucket)
        refill(bucket)
        assert bucket.tokens == pytest.approx(500.0)

    def test_oversized_kernel_not_starved(self):
        """Test that a kernel larger than t_max completes across windows."""
        bucket = TokenBucket(rate_ratio=1.0)
        bucket.tokens = 0.0
        result = try_launch(bucket, 2500.0)
        assert result.oversized
        for _ in range(3):
            refill(bucket)
        assert 0 in bucket.completed_kernels

    def test_non_positive_size(self):
        """Test that an empty kernel is rejected."""
        with pytest.raises(ValueError):
            try_launch(TokenBucket(), 0.0)


class TestRateChanges:
    """Test staged rate updates."""

    def test_set_rate_applies_at_next_window(self):
        """Test that a new rate only takes effect at refill."""
        bucket = TokenBucket(rate_ratio=1.0)
        set_rate(bucket, 0.2)
        assert bucket.rate_ratio == 1.0
        assert bucket.pending_rate == 0.2
        refill(bucket)
        assert bucket.rate_ratio == 0.2
        assert bucket.tokens == pytest.approx(200.0)

    def test_rate_below_minimum(self):
        """Test that rho below 0.1 is a configuration error."""
        with pytest.raises(ConfigurationError):
            set_rate(TokenBucket(), 0.05)
        with pytest.raises(ConfigurationError):
            TokenBucket(rate_ratio=1.5)

    def test_advance_to_collapses_idle_windows(self):
        """Test that idle windows refill once."""
        bucket = TokenBucket(rate_ratio=0.5)
        bucket.advance_to(100.0)
        assert bucket.windows == 1
        assert bucket.tokens == pytest.approx(500.0)

    def test_advance_to_boundary_from_float_seconds(self):
        """Test that a boundary reached a rounding error early still refills."""
        bucket = TokenBucket(rate_ratio=0.5)
        bucket.advance_to(10.0)
        assert bucket.next_boundary_ms == pytest.approx(20.0)
        bucket.advance_to(30.0 - 1e-12)
        assert bucket.windows == 2
        assert bucket.next_boundary_ms == pytest.approx(40.0)

    def test_blocked_kernels_refill_every_window(self):
        """Test that pending work is drained across consecutive windows."""
        bucket = TokenBucket(rate_ratio=0.25)
        for _ in range(4):
            try_launch(bucket, 250.0)
        assert bucket.blocked_count == 3
        bucket.advance_to(25.0)
        assert bucket.blocked_count == 1
        assert bucket.admitted_total == pytest.approx(750.0)


class TestDevices:
    """Test a bucket pooled by several devices."""

    def test_grant_scales_with_devices(self):
        """Test that the per-window grant is t_max * rho per device."""
        bucket = TokenBucket(rate_ratio=0.5, devices=3)
        assert bucket.grant == pytest.approx(1500.0)
        assert bucket.tokens == pytest.approx(1500.0)

    def test_device_change_applies_at_refill(self):
        """Test that a new device count is granted from the next window."""
        bucket = TokenBucket(rate_ratio=0.5)
        bucket.devices = 2
        assert bucket.tokens == pytest.approx(500.0)
        refill(bucket)
        assert bucket.tokens == pytest.approx(1000.0)

    def test_zero_devices_rejected(self):
        """Test that a bucket needs at least one device."""
        with pytest.raises(ValueError):
            TokenBucket(devices=0)


class TestProportionality:
    """Test admitted throughput under saturating demand."""

    @pytest.mark.parametrize("rho", [0.1, 0.3, 0.5, 0.9])
    def test_admitted_rate_proportional(self, rho):
        """Test that admitted work is within 2% of rho times full rate."""
        windows = 500
        bucket = TokenBucket(rate_ratio=rho)
        admitted = _saturate(bucket, windows)
        full_rate = bucket.t_max * (windows + 1)
        assert admitted / full_rate == pytest.approx(rho, rel=0.02)


class TestQuotaUtilization:
    """Test quota-normalized utilization."""

    def test_half_quota(self):
        """Test normalization by the applied rate."""
        assert quota_utilization(0.4, 0.5) == pytest.approx(0.8)

    def test_capped_at_one(self):
        """Test that utilization never exceeds 1."""
        assert quota_utilization(0.9, 0.5) == 1.0

    def test_identity_at_full_rate(self):
        """Test that rho = 1 leaves utilization unchanged."""
        assert quota_utilization(0.37, 1.0) == pytest.approx(0.37)

    def test_rho_below_minimum(self):
        """Test that a rate below the minimum is rejected."""
        with pytest.raises(ConfigurationError):
            quota_utilization(0.5, 0.01)
