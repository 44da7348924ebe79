"""
Discrete-event simulator of an N-stage tandem-queue inference pipeline.

Each stage is a multi-server FIFO queue whose replicas serve requests with
exponentially distributed service times. A request leaves stage i and
enters stage i+1 at the same instant; its end-to-end latency is measured
from arrival at stage 1 to departure from stage N.

The simulator is advanced in fixed steps (dt, default 100 ms). Arrivals
for a step are drawn from the workload pattern and placed uniformly inside
the step, which keeps the arrival process exactly Poisson. Events inside a
step are processed in timestamp order from a heap, so queueing behaviour
does not depend on dt.

Service rate per replica:
    base_service_rate x cpu_multiplier(c, m) [x rho for GPU stages]

GPU stages do not scale their service time by rho directly. A request's
work is drawn at the full rate and converted to token units, then issued
as kernels of at most one device-window's grant through the stage's token
bucket. A kernel that the bucket blocks holds its replica until a later
refill admits it, so the stage's throughput follows rho window by window.

cpu_multiplier is a declared simulator assumption, not a measured curve:
    min(c/c_ref, 1 + 0.5 * log2(c/c_ref)), weighted by cpu_sensitivity,
    clamped to [0.25, 2], halved when memory is below the stage floor.

Determinism: two simulators built with the same seed and driven with the
same calls produce identical metrics. Arrivals and service times use
separate random streams spawned from the seed, so a cloned simulator that
receives a different action still sees the same arrival sequence.
"""

from __future__ import annotations

import copy
import heapq
import logging
import math
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np

from .config import (
    CPU_MAX_MILLICORES,
    CPU_MIN_MILLICORES,
    CPU_MULTIPLIER_MAX,
    CPU_MULTIPLIER_MIN,
    DEFAULT_STAGE_NAMES,
    MEMORY_DEGRADATION,
    MEMORY_MAX_MB,
    MEMORY_MIN_MB,
    N_MAX,
    N_MIN,
    REFERENCE_CPU_MILLICORES,
    RHO_MAX,
    RHO_MIN,
    SIM_DT_S,
    STARTUP_DELAY_S,
)
from .throttle import TokenBucket, quota_utilization
from .utils import validate_non_negative, validate_positive
from .workload import WorkloadPattern, generate_arrivals

logger = logging.getLogger(__name__)

StageKind = Literal["cpu", "gpu"]

_ARRIVE = 0
_DEPART = 1
_ACTIVATE = 2
_KERNEL_DONE = 3
_REFILL = 4


class NoSamplesError(ValueError):
    """Raised when a latency window holds no completed requests."""


@dataclass(frozen=True)
class StageSpec:
    """
    Static description of one pipeline stage.

    Attributes:
        id: Stage index, 1..N
        kind: "cpu" or "gpu"
        base_service_rate: Requests/s per replica at the reference allocation
        cpu_sensitivity: Weight of the CPU allocation curve (0 = insensitive)
        memory_floor_mb: Memory below which service degrades
        queue_capacity: Max waiting requests, None for unbounded
        name: Role name used in the JSON action schema
        memory_usage_mb: Resident memory per replica at full load
    """

    id: int
    kind: StageKind
    base_service_rate: float
    cpu_sensitivity: float = 1.0
    memory_floor_mb: int = 256
    queue_capacity: int | None = None
    name: str = ""
    memory_usage_mb: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("cpu", "gpu"):
            raise ValueError(f"kind must be 'cpu' or 'gpu', got {self.kind!r}")
        if self.id < 1:
            raise ValueError(f"stage id must be >= 1, got {self.id}")
        validate_positive(self.base_service_rate, "base_service_rate")
        validate_non_negative(self.cpu_sensitivity, "cpu_sensitivity")
        validate_non_negative(self.memory_floor_mb, "memory_floor_mb")
        if self.queue_capacity is not None and self.queue_capacity < 0:
            raise ValueError(f"queue_capacity must be >= 0 or None, got {self.queue_capacity}")

    @property
    def resident_memory_mb(self) -> float:
        return self.memory_usage_mb if self.memory_usage_mb > 0 else float(self.memory_floor_mb)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "name": self.name,
            "base_service_rate": self.base_service_rate,
            "cpu_sensitivity": self.cpu_sensitivity,
            "memory_floor_mb": self.memory_floor_mb,
            "queue_capacity": self.queue_capacity,
            "memory_usage_mb": self.memory_usage_mb,
        }


@dataclass(frozen=True)
class ResourceConfig:
    """Per-stage allocation r_i = (n, c, m, rho)."""

    replicas: int = 1
    cpu_millicores: int = REFERENCE_CPU_MILLICORES
    memory_mb: int = 1024
    gpu_rate_ratio: float = 1.0

    def __post_init__(self) -> None:
        if not (N_MIN <= self.replicas <= N_MAX):
            raise ValueError(f"replicas must be in [{N_MIN}, {N_MAX}], got {self.replicas}")
        if not (CPU_MIN_MILLICORES <= self.cpu_millicores <= CPU_MAX_MILLICORES):
            raise ValueError(
                f"cpu_millicores must be in [{CPU_MIN_MILLICORES}, {CPU_MAX_MILLICORES}], "
                f"got {self.cpu_millicores}"
            )
        if not (MEMORY_MIN_MB <= self.memory_mb <= MEMORY_MAX_MB):
            raise ValueError(
                f"memory_mb must be in [{MEMORY_MIN_MB}, {MEMORY_MAX_MB}], got {self.memory_mb}"
            )
        if not (RHO_MIN - 1e-9 <= self.gpu_rate_ratio <= RHO_MAX + 1e-9):
            raise ValueError(
                f"gpu_rate_ratio must be in [{RHO_MIN}, {RHO_MAX}], got {self.gpu_rate_ratio}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "replicas": self.replicas,
            "cpu_millicores": self.cpu_millicores,
            "memory_mb": self.memory_mb,
            "gpu_rate_ratio": self.gpu_rate_ratio,
        }


@dataclass(frozen=True)
class StageState:
    """Observed metrics of one stage over the current window."""

    stage_id: int
    name: str
    kind: StageKind
    config: ResourceConfig
    queue_depth: int
    cpu_util: float
    gpu_util_quota: float
    gpu_util_actual: float
    processing_ms: float
    queue_delay_ms: float
    p99_ms: float
    arrival_rate_rps: float
    capacity_rps: float
    ready_replicas: int
    cpu_usage_millicores: float
    memory_usage_mb: float
    dropped: int = 0

    @property
    def utilization(self) -> float:
        """Quota-normalized utilization: GPU quota share or CPU busy share."""
        return self.gpu_util_quota if self.kind == "gpu" else self.cpu_util

    @property
    def demand_ratio(self) -> float:
        """Arrival rate over service capacity; exceeds 1 when overloaded."""
        if self.capacity_rps <= 0:
            return 0.0
        return self.arrival_rate_rps / self.capacity_rps


@dataclass(frozen=True)
class PipelineState:
    """
    Context x_t: per-stage metrics plus global latency and throughput.

    frontier holds a snapshot of the Pareto frontier when the decision loop
    attaches one; the simulator itself leaves it empty.
    """

    stages: tuple[StageState, ...]
    p99_ms: float
    mean_latency_ms: float
    throughput_rps: float
    t: float
    arrivals: int = 0
    completions: int = 0
    drops: int = 0
    in_flight: int = 0
    window_samples: int = 0
    frontier: Any = None

    @property
    def configs(self) -> tuple[ResourceConfig, ...]:
        return tuple(s.config for s in self.stages)

    @property
    def stage_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.stages)

    def stage(self, name: str) -> StageState:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def with_frontier(self, frontier: Any) -> PipelineState:
        return replace(self, frontier=frontier)


def cpu_multiplier(cpu_millicores: float, memory_mb: float, spec: StageSpec) -> float:
    """
    Service-rate multiplier for a CPU/memory allocation.

    Args:
        cpu_millicores: Allocated CPU
        memory_mb: Allocated memory
        spec: Stage description (sensitivity and memory floor)

    Returns:
        Multiplier in [0.125, 2]; 1.0 at the reference allocation

    Examples:
        >>> spec = StageSpec(id=1, kind="cpu", base_service_rate=10)
        >>> cpu_multiplier(1000, 1024, spec)
        1.0
        >>> cpu_multiplier(2000, 1024, spec)
        1.5
    """
    ratio = max(cpu_millicores, 1e-9) / REFERENCE_CPU_MILLICORES
    curve = min(ratio, 1.0 + 0.5 * math.log2(ratio))
    weighted = 1.0 + spec.cpu_sensitivity * (curve - 1.0)
    multiplier = min(CPU_MULTIPLIER_MAX, max(CPU_MULTIPLIER_MIN, weighted))
    if memory_mb < spec.memory_floor_mb:
        multiplier *= MEMORY_DEGRADATION
    return multiplier


def sample_latency_percentile(window: Sequence[float], p: float) -> float:
    """
    Nearest-rank percentile of latency samples.

    Args:
        window: Completed-request latencies (ms)
        p: Percentile in (0, 100]

    Returns:
        The sample at rank ceil(p/100 * n)

    Raises:
        ValueError: If p is outside (0, 100]
        NoSamplesError: If the window is empty

    Examples:
        >>> sample_latency_percentile([float(x) for x in range(10, 1001, 10)], 99)
        990.0
    """
    if not (0 < p <= 100):
        raise ValueError(f"p must be in (0, 100], got {p}")
    n = len(window)
    if n == 0:
        raise NoSamplesError("no latency samples in window")
    ordered = sorted(window)
    rank = max(1, math.ceil(p * n / 100.0 - 1e-9))
    return float(ordered[rank - 1])


def name_stages(specs: Sequence[StageSpec]) -> list[StageSpec]:
    """Fill empty stage names with role names (3 stages) or stage_<id>."""
    named = []
    for i, spec in enumerate(specs):
        if spec.name:
            named.append(spec)
        elif len(specs) == len(DEFAULT_STAGE_NAMES):
            named.append(replace(spec, name=DEFAULT_STAGE_NAMES[i]))
        else:
            named.append(replace(spec, name=f"stage_{spec.id}"))
    names = [s.name for s in named]
    if len(set(names)) != len(names):
        raise ValueError(f"stage names must be unique, got {names}")
    return named


class _Request:
    __slots__ = ("born", "stage_arrival", "service_start")

    def __init__(self, born: float) -> None:
        self.born = born
        self.stage_arrival = born
        self.service_start = born


@dataclass
class _GpuJob:
    """A request in service on a GPU stage, issued as token-bucket kernels."""

    request: _Request
    remaining: float
    kernel: float = 0.0


@dataclass
class _StageRuntime:
    spec: StageSpec
    config: ResourceConfig
    bucket: TokenBucket | None
    ready: int
    pending: int = 0
    cancel_tokens: int = 0
    busy: int = 0
    retiring_busy: int = 0
    queue: deque[_Request] = field(default_factory=deque)
    # Kernels waiting on the bucket, same order as its blocked queue
    gpu_blocked: deque[_GpuJob] = field(default_factory=deque)
    refill_at_ms: float | None = None
    # Window accumulators
    last_t: float = 0.0
    busy_area: float = 0.0
    ready_area: float = 0.0
    arrivals: int = 0
    drops: int = 0
    waits: list[float] = field(default_factory=list)
    services: list[float] = field(default_factory=list)
    sojourns: list[float] = field(default_factory=list)
    # Whole-run accumulators
    total_wait_s: float = 0.0
    total_started: int = 0
    total_drops: int = 0

    @property
    def rate_ratio(self) -> float:
        return self.bucket.rate_ratio if self.bucket is not None else 1.0

    def full_rate(self) -> float:
        """Per-replica service rate with the GPU unthrottled."""
        return self.spec.base_service_rate * cpu_multiplier(
            self.config.cpu_millicores, self.config.memory_mb, self.spec
        )

    def per_replica_rate(self) -> float:
        rate = self.full_rate()
        if self.spec.kind == "gpu":
            rate *= self.rate_ratio
        return rate

    def units_per_s(self) -> float:
        """Token units one device processes per second at the full rate."""
        assert self.bucket is not None
        return self.bucket.t_max * 1000.0 / self.bucket.window_ms

    def accumulate(self, now: float) -> None:
        span = now - self.last_t
        if span > 0:
            self.busy_area += self.busy * span
            self.ready_area += self.ready * span
            self.last_t = now

    def free_servers(self) -> int:
        return self.ready - (self.busy - self.retiring_busy)

    def reset_window(self, now: float) -> None:
        self.last_t = now
        self.busy_area = 0.0
        self.ready_area = 0.0
        self.arrivals = 0
        self.drops = 0
        self.waits = []
        self.services = []
        self.sojourns = []


class PipelineSimulator:
    """
    Tandem-queue pipeline simulator.

    Typical use:
        sim = PipelineSimulator(stages, configs, workload)
        sim.run_for(30.0)
        state = sim.observe()
        sim.reset_window()

    Metrics returned by observe() cover everything since the last
    reset_window() call.
    """

    def __init__(
        self,
        stages: Sequence[StageSpec],
        configs: Sequence[ResourceConfig],
        workload: WorkloadPattern,
        *,
        seed: int | None = None,
        startup_delay_s: float = STARTUP_DELAY_S,
        dt: float = SIM_DT_S,
    ) -> None:
        if not stages:
            raise ValueError("pipeline must have at least one stage")
        if len(stages) != len(configs):
            raise ValueError(
                f"need one config per stage, got {len(configs)} configs for {len(stages)} stages"
            )
        validate_non_negative(startup_delay_s, "startup_delay_s")
        validate_positive(dt, "dt")
        self.stages = name_stages(stages)
        self.workload = workload
        self.startup_delay_s = startup_delay_s
        self.dt = dt
        self.seed = workload.seed if seed is None else seed
        arrival_seq, service_seq = np.random.SeedSequence(self.seed).spawn(2)
        self._arrival_rng = np.random.default_rng(arrival_seq)
        self._service_rng = np.random.default_rng(service_seq)

        self._runtimes: list[_StageRuntime] = []
        for spec, config in zip(self.stages, configs):
            self._check_config(spec, config)
            bucket = (
                TokenBucket(rate_ratio=config.gpu_rate_ratio, devices=max(1, config.replicas))
                if spec.kind == "gpu"
                else None
            )
            self._runtimes.append(
                _StageRuntime(spec=spec, config=config, bucket=bucket, ready=config.replicas)
            )

        self.t = 0.0
        self._events: list[tuple[float, int, int, int, Any]] = []
        self._seq = 0
        self._window_start = 0.0
        self._window_latencies: list[float] = []
        self._window_completions = 0
        self._window_arrivals = 0
        self.total_arrivals = 0
        self.total_completions = 0
        self.total_drops = 0
        self.latencies_ms: list[float] = []
        self._last_p99 = self.nominal_latency_ms()
        self._last_mean = self._last_p99

    # ------------------------------------------------------------------
    # Configuration
    # ------------------------------------------------------------------

    @property
    def configs(self) -> tuple[ResourceConfig, ...]:
        return tuple(rt.config for rt in self._runtimes)

    @property
    def in_flight(self) -> int:
        return sum(len(rt.queue) + rt.busy for rt in self._runtimes)

    def token_bucket(self, index: int) -> TokenBucket | None:
        """Token bucket of stage index (0-based), None for CPU stages."""
        return self._runtimes[index].bucket

    def nominal_latency_ms(self) -> float:
        """Sum of mean per-stage service times with no queueing."""
        return sum(1000.0 / rt.per_replica_rate() for rt in self._runtimes)

    def apply_configs(self, configs: Sequence[ResourceConfig]) -> None:
        """
        Actuate new absolute allocations.

        Replica additions become ready after the startup delay; removals
        are immediate (pending additions are cancelled first, busy replicas
        finish their current request). CPU/memory changes affect requests
        that start service afterwards. GPU rate changes are staged on the
        token bucket and apply at its next refill window.
        """
        if len(configs) != len(self._runtimes):
            raise ValueError(f"expected {len(self._runtimes)} configs, got {len(configs)}")
        for index, (rt, new) in enumerate(zip(self._runtimes, configs)):
            self._check_config(rt.spec, new)
            rt.accumulate(self.t)
            delta = new.replicas - rt.config.replicas
            if delta > 0:
                rt.pending += delta
                for _ in range(delta):
                    self._push(self.t + self.startup_delay_s, _ACTIVATE, index, None)
            elif delta < 0:
                remove = -delta
                cancelled = min(remove, rt.pending)
                rt.pending -= cancelled
                rt.cancel_tokens += cancelled
                remove -= cancelled
                rt.ready -= remove
                overflow = (rt.busy - rt.retiring_busy) - rt.ready
                if overflow > 0:
                    rt.retiring_busy += overflow
            if rt.bucket is not None:
                # Boundaries up to now refill at the old rate.
                self._sync_bucket(index, self.t)
                if new.gpu_rate_ratio != rt.config.gpu_rate_ratio:
                    rt.bucket.set_rate(new.gpu_rate_ratio)
            rt.config = new
            self._start_service(index)

    @staticmethod
    def _check_config(spec: StageSpec, config: ResourceConfig) -> None:
        if spec.kind == "cpu" and abs(config.gpu_rate_ratio - 1.0) > 1e-9:
            raise ValueError(
                f"stage {spec.name or spec.id} is a CPU stage; gpu_rate_ratio must be 1.0"
            )

    # ------------------------------------------------------------------
    # Time advance
    # ------------------------------------------------------------------

    def step(self, dt: float | None = None) -> None:
        """Advance the simulation by dt seconds (default: the configured step)."""
        dt = self.dt if dt is None else dt
        validate_positive(dt, "dt")
        t_end = self.t + dt
        count = generate_arrivals(self.workload, self.t, dt, self._arrival_rng)
        if count:
            offsets = np.sort(self._arrival_rng.uniform(0.0, dt, count))
            for offset in offsets:
                self._push(self.t + float(offset), _ARRIVE, 0, _Request(self.t + float(offset)))
        for index, rt in enumerate(self._runtimes):
            if rt.bucket is not None:
                self._sync_bucket(index, self.t)

        events = self._events
        while events and events[0][0] < t_end:
            when, _, kind, index, payload = heapq.heappop(events)
            if kind == _ARRIVE:
                if index == 0:
                    self.total_arrivals += 1
                    self._window_arrivals += 1
                self._arrive(index, payload, when)
            elif kind == _DEPART:
                self._depart(index, payload, when)
            elif kind == _KERNEL_DONE:
                self._kernel_done(index, payload, when)
            elif kind == _REFILL:
                self._refill(index, when)
            else:
                self._activate(index, when)
        self.t = t_end

    def run_for(self, duration: float, dt: float | None = None) -> None:
        """Advance by duration seconds in steps of dt."""
        validate_non_negative(duration, "duration")
        dt = self.dt if dt is None else dt
        steps = int(round(duration / dt))
        for _ in range(steps):
            self.step(dt)

    def _push(self, when: float, kind: int, index: int, payload: Any) -> None:
        heapq.heappush(self._events, (when, self._seq, kind, index, payload))
        self._seq += 1

    def _arrive(self, index: int, request: _Request, now: float) -> None:
        rt = self._runtimes[index]
        rt.arrivals += 1
        request.stage_arrival = now
        if rt.free_servers() > 0 and not rt.queue:
            rt.queue.append(request)
            self._start_service(index, now)
            return
        capacity = rt.spec.queue_capacity
        if capacity is not None and len(rt.queue) >= capacity:
            rt.drops += 1
            rt.total_drops += 1
            self.total_drops += 1
            return
        rt.queue.append(request)

    def _start_service(self, index: int, now: float | None = None) -> None:
        now = self.t if now is None else now
        rt = self._runtimes[index]
        while rt.queue and rt.free_servers() > 0:
            request = rt.queue.popleft()
            rt.accumulate(now)
            rt.busy += 1
            wait = now - request.stage_arrival
            rt.waits.append(wait * 1000.0)
            rt.total_wait_s += wait
            rt.total_started += 1
            if rt.bucket is None:
                duration = float(self._service_rng.exponential(1.0 / rt.per_replica_rate()))
                rt.services.append(duration * 1000.0)
                self._push(now + duration, _DEPART, index, request)
            else:
                request.service_start = now
                duration = float(self._service_rng.exponential(1.0 / rt.full_rate()))
                self._launch(index, _GpuJob(request, duration * rt.units_per_s()), now)

    # ------------------------------------------------------------------
    # GPU admission
    # ------------------------------------------------------------------

    def _launch(self, index: int, job: _GpuJob, now: float) -> None:
        """Issue the next kernel of job through the stage's token bucket."""
        rt = self._runtimes[index]
        bucket = rt.bucket
        assert bucket is not None
        self._sync_bucket(index, now)
        kernel = min(job.remaining, bucket.t_max * bucket.rate_ratio)
        if bucket.blocked_count == 0 and 1.0 <= bucket.tokens < kernel:
            # Fit the balance left in this window instead of blocking on it.
            kernel = bucket.tokens
        job.kernel = kernel
        rt.gpu_blocked.append(job)
        bucket.try_launch(job.kernel)
        self._release_admitted(index, now)
        if rt.gpu_blocked:
            self._schedule_refill(index)

    def _sync_bucket(self, index: int, now: float) -> None:
        """Run the refills due by now and start any kernels they admit."""
        rt = self._runtimes[index]
        assert rt.bucket is not None
        rt.bucket.devices = max(1, rt.ready)
        rt.bucket.advance_to(now * 1000.0)
        self._release_admitted(index, now)

    def _release_admitted(self, index: int, now: float) -> None:
        rt = self._runtimes[index]
        assert rt.bucket is not None
        admitted = len(rt.gpu_blocked) - rt.bucket.blocked_count
        for _ in range(admitted):
            job = rt.gpu_blocked.popleft()
            self._push(now + job.kernel / rt.units_per_s(), _KERNEL_DONE, index, job)

    def _schedule_refill(self, index: int) -> None:
        rt = self._runtimes[index]
        assert rt.bucket is not None
        boundary = rt.bucket.next_boundary_ms
        if rt.refill_at_ms != boundary:
            rt.refill_at_ms = boundary
            self._push(boundary / 1000.0, _REFILL, index, None)

    def _refill(self, index: int, now: float) -> None:
        rt = self._runtimes[index]
        rt.refill_at_ms = None
        self._sync_bucket(index, now)
        if rt.gpu_blocked:
            self._schedule_refill(index)

    def _kernel_done(self, index: int, job: _GpuJob, now: float) -> None:
        job.remaining -= job.kernel
        if job.remaining > 1e-9:
            self._launch(index, job, now)
            return
        rt = self._runtimes[index]
        rt.services.append((now - job.request.service_start) * 1000.0)
        self._depart(index, job.request, now)

    def _depart(self, index: int, request: _Request, now: float) -> None:
        rt = self._runtimes[index]
        rt.accumulate(now)
        rt.busy -= 1
        if rt.retiring_busy > 0:
            rt.retiring_busy -= 1
        rt.sojourns.append((now - request.stage_arrival) * 1000.0)
        self._start_service(index, now)
        if index + 1 < len(self._runtimes):
            self._arrive(index + 1, request, now)
        else:
            latency = (now - request.born) * 1000.0
            self._window_latencies.append(latency)
            self.latencies_ms.append(latency)
            self._window_completions += 1
            self.total_completions += 1

    def _activate(self, index: int, now: float) -> None:
        rt = self._runtimes[index]
        if rt.cancel_tokens > 0:
            rt.cancel_tokens -= 1
            return
        rt.accumulate(now)
        rt.pending -= 1
        rt.ready += 1
        self._start_service(index, now)

    # ------------------------------------------------------------------
    # Observation
    # ------------------------------------------------------------------

    def reset_window(self) -> None:
        """Start a fresh metrics window at the current time."""
        self._window_start = self.t
        self._window_latencies = []
        self._window_completions = 0
        self._window_arrivals = 0
        for rt in self._runtimes:
            rt.accumulate(self.t)
            rt.reset_window(self.t)

    def observe(self) -> PipelineState:
        """Summarize the current window into a PipelineState."""
        span = max(self.t - self._window_start, 1e-9)
        stage_states = []
        for rt in self._runtimes:
            rt.accumulate(self.t)
            rate = rt.per_replica_rate()
            busy_share = min(1.0, rt.busy_area / rt.ready_area) if rt.ready_area > 0 else 0.0
            nominal_ms = 1000.0 / rate
            if rt.spec.kind == "gpu":
                rho = rt.rate_ratio
                u_actual = busy_share * rho
                u_quota = quota_utilization(u_actual, rho)
                u_cpu = 0.0
            else:
                u_actual = u_quota = 0.0
                u_cpu = busy_share
            processing = float(np.mean(rt.services)) if rt.services else nominal_ms
            queue_delay = float(np.mean(rt.waits)) if rt.waits else 0.0
            stage_p99 = (
                sample_latency_percentile(rt.sojourns, 99) if rt.sojourns else nominal_ms
            )
            stage_states.append(
                StageState(
                    stage_id=rt.spec.id,
                    name=rt.spec.name,
                    kind=rt.spec.kind,
                    config=rt.config,
                    queue_depth=len(rt.queue),
                    cpu_util=u_cpu,
                    gpu_util_quota=u_quota,
                    gpu_util_actual=u_actual,
                    processing_ms=processing,
                    queue_delay_ms=queue_delay,
                    p99_ms=stage_p99,
                    arrival_rate_rps=rt.arrivals / span,
                    capacity_rps=rt.ready * rate,
                    ready_replicas=rt.ready,
                    cpu_usage_millicores=busy_share * rt.config.cpu_millicores,
                    memory_usage_mb=rt.spec.resident_memory_mb * (0.5 + 0.5 * busy_share),
                    dropped=rt.drops,
                )
            )

        if self._window_latencies:
            self._last_p99 = sample_latency_percentile(self._window_latencies, 99)
            self._last_mean = float(np.mean(self._window_latencies))
        elif self.total_completions == 0:
            self._last_p99 = self._last_mean = self.nominal_latency_ms()

        return PipelineState(
            stages=tuple(stage_states),
            p99_ms=self._last_p99,
            mean_latency_ms=self._last_mean,
            throughput_rps=self._window_completions / span,
            t=self.t,
            arrivals=self.total_arrivals,
            completions=self.total_completions,
            drops=self.total_drops,
            in_flight=self.in_flight,
            window_samples=len(self._window_latencies),
        )

    def mean_queue_delay_s(self, index: int) -> float:
        """Whole-run mean waiting time before service at stage index."""
        rt = self._runtimes[index]
        return rt.total_wait_s / rt.total_started if rt.total_started else 0.0

    def clone(self) -> PipelineSimulator:
        """Deep copy, including random stream state."""
        return copy.deepcopy(self)


def step(sim: PipelineSimulator, dt: float = SIM_DT_S) -> PipelineState:
    """
    Advance a simulator by dt and return the observed state.

    Raises:
        ValueError: If dt <= 0
    """
    sim.step(dt)
    return sim.observe()
