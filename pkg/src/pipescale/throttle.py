"""
Simulated token-bucket GPU rate control.

A bucket grants t_max * rho work units at the start of every refill window.
Kernel launches consume tokens proportional to their grid size and block,
in FIFO order, when the balance is insufficient. Unconsumed tokens do not
carry over: each refill resets the balance to the grant.

Rate changes are staged and applied at the next window boundary.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

from .config import RHO_MAX, RHO_MIN, TOKEN_T_MAX, TOKEN_WINDOW_MS
from .utils import ConfigurationError, validate_positive

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LaunchResult:
    """Outcome of a single kernel launch request."""

    admitted: bool
    blocked: bool
    oversized: bool = False


@dataclass
class _BlockedKernel:
    kernel_id: int
    remaining: float
    size: float


@dataclass
class TokenBucket:
    """
    Token bucket pooled by the devices of one GPU stage.

    Attributes:
        rate_ratio: Applied rate ratio rho
        window_ms: Refill window length
        t_max: Tokens granted per device per full-rate window
        devices: Devices drawing on this bucket
        tokens: Current balance, always within [0, grant]
    """

    rate_ratio: float = 1.0
    window_ms: float = TOKEN_WINDOW_MS
    t_max: float = TOKEN_T_MAX
    devices: int = 1
    tokens: float = field(default=-1.0)
    windows: int = 0
    granted_total: float = 0.0
    admitted_total: float = 0.0
    admitted_in_window: float = 0.0
    completed_kernels: list[int] = field(default_factory=list)
    _blocked: deque[_BlockedKernel] = field(default_factory=deque, repr=False)
    _pending_rate: float | None = field(default=None, repr=False)
    _next_id: int = field(default=0, repr=False)
    _last_boundary_ms: float = field(default=0.0, repr=False)

    def __post_init__(self) -> None:
        validate_positive(self.window_ms, "window_ms")
        validate_positive(self.t_max, "t_max")
        validate_positive(self.devices, "devices")
        _check_rate(self.rate_ratio)
        if self.tokens < 0:
            self.tokens = self.grant
            self.granted_total = self.grant

    @property
    def grant(self) -> float:
        """Tokens granted per window at the applied rate."""
        return self.t_max * min(1.0, self.rate_ratio) * self.devices

    @property
    def blocked_work(self) -> float:
        """Work units waiting for a refill."""
        return sum(k.remaining for k in self._blocked)

    @property
    def blocked_count(self) -> int:
        return len(self._blocked)

    @property
    def next_boundary_ms(self) -> float:
        """Time of the next refill window boundary."""
        return self._last_boundary_ms + self.window_ms

    @property
    def pending_rate(self) -> float | None:
        """Rate staged by set_rate, not yet applied."""
        return self._pending_rate

    def refill(self) -> "TokenBucket":
        """
        Start a new window: apply any staged rate, reset the balance to the
        grant and admit blocked work in FIFO order.

        Returns:
            self, for chaining
        """
        if self._pending_rate is not None:
            self.rate_ratio = self._pending_rate
            self._pending_rate = None
        self.windows += 1
        self.tokens = self.grant
        self.granted_total += self.grant
        self.admitted_in_window = 0.0
        self._drain_blocked()
        return self

    def try_launch(self, grid_blocks: float) -> LaunchResult:
        """
        Request admission for a kernel of grid_blocks work units.

        A kernel larger than the per-window grant consumes whatever the
        window holds and finishes across later windows, so it is never
        starved. Kernels larger than t_max are flagged as oversized.

        Args:
            grid_blocks: Work units (> 0)

        Returns:
            LaunchResult with admitted/blocked flags

        Raises:
            ValueError: If grid_blocks <= 0
        """
        validate_positive(grid_blocks, "grid_blocks")
        oversized = grid_blocks > self.t_max
        if oversized:
            logger.debug("oversized kernel: %s work units > t_max %s", grid_blocks, self.t_max)
        kernel = _BlockedKernel(self._next_id, float(grid_blocks), float(grid_blocks))
        self._next_id += 1

        if not self._blocked and self.tokens >= grid_blocks:
            self._consume(kernel, grid_blocks)
            self.completed_kernels.append(kernel.kernel_id)
            return LaunchResult(admitted=True, blocked=False, oversized=oversized)

        self._blocked.append(kernel)
        self._drain_blocked()
        admitted = not self._blocked or self._blocked[-1] is not kernel
        return LaunchResult(admitted=admitted, blocked=not admitted, oversized=oversized)

    def set_rate(self, rho_new: float) -> "TokenBucket":
        """
        Stage a new rate ratio for the next refill window.

        Raises:
            ConfigurationError: If rho_new is outside [RHO_MIN, 1]
        """
        _check_rate(rho_new)
        self._pending_rate = float(rho_new)
        return self

    def advance_to(self, now_ms: float) -> None:
        """
        Run every refill whose window boundary lies in (last boundary, now_ms].

        Idle windows collapse into a single refill since balances do not
        carry over.
        """
        # Boundaries reached through float seconds may land a hair early.
        elapsed = int((now_ms - self._last_boundary_ms) / self.window_ms + 1e-9)
        if elapsed <= 0:
            return
        self._last_boundary_ms += elapsed * self.window_ms
        if self._blocked:
            for _ in range(elapsed):
                self.refill()
                if not self._blocked:
                    break
        else:
            self.refill()

    def _consume(self, kernel: _BlockedKernel, amount: float) -> None:
        kernel.remaining -= amount
        self.tokens -= amount
        self.admitted_total += amount
        self.admitted_in_window += amount

    def _drain_blocked(self) -> None:
        while self._blocked and self.tokens > 0:
            head = self._blocked[0]
            if self.tokens >= head.remaining:
                self._consume(head, head.remaining)
                self._blocked.popleft()
                self.completed_kernels.append(head.kernel_id)
            elif head.remaining > self.grant:
                # Larger than any single window: take what this window holds.
                self._consume(head, self.tokens)
                break
            else:
                break


def refill(bucket: TokenBucket) -> TokenBucket:
    """Functional form of TokenBucket.refill."""
    return bucket.refill()


def try_launch(bucket: TokenBucket, grid_blocks: float) -> LaunchResult:
    """Functional form of TokenBucket.try_launch."""
    return bucket.try_launch(grid_blocks)


def set_rate(bucket: TokenBucket, rho_new: float) -> TokenBucket:
    """Functional form of TokenBucket.set_rate."""
    return bucket.set_rate(rho_new)


def quota_utilization(u_actual: float, rho: float, *, rho_min: float = RHO_MIN) -> float:
    """
    Normalize GPU utilization to the stage's rate quota.

    Args:
        u_actual: Fraction of full-rate GPU capacity in use, [0, 1]
        rho: Applied rate ratio

    Returns:
        min(1, u_actual / rho)

    Raises:
        ConfigurationError: If rho < rho_min

    Examples:
        >>> quota_utilization(0.4, 0.5)
        0.8
    """
    if rho < rho_min - 1e-12:
        raise ConfigurationError(f"rho must be >= {rho_min}, got {rho}")
    return min(1.0, max(0.0, u_actual) / rho)


def _check_rate(rho: float) -> None:
    if not (RHO_MIN - 1e-12 <= rho <= RHO_MAX + 1e-12):
        raise ConfigurationError(f"rate_ratio must be in [{RHO_MIN}, {RHO_MAX}], got {rho}")
