"""
Positive-only experience buffer and in-context example selection.

An experience is one (context, action, reward) tuple. The buffer keeps
only experiences whose reward exceeds r_min and scores each stored one
against the current context by

    surprisal(e) = sim(x_e, x) * |r_e - E[r | D without e]|

Selection greedily maximizes the summed surprisal of the chosen set minus
lambda_div times the pairwise similarity inside it. Contexts are z-scored
per dimension with buffer statistics before any kernel distance is taken.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .actions import ScalingAction
from .config import CONTEXT_SIZE_M, LAMBDA_DIV, R_MIN, SIGMA_REFRESH_INTERVAL
from .simulator import PipelineState
from .utils import ConfigurationError

logger = logging.getLogger(__name__)

ExperienceSource = Literal["llm", "mock", "probe"]
SelectionMode = Literal["surprisal", "similarity", "random"]
SurpriseBaseline = Literal["global", "local"]

# Largest sample used for the median-distance bandwidth
_SIGMA_SAMPLE = 400


def extract_features(state: PipelineState) -> tuple[float, ...]:
    """
    Context vector: per stage [n, c, m, rho, q, u_cpu, u_gpu], then
    [p99_ms, throughput].
    """
    features: list[float] = []
    for s in state.stages:
        cfg = s.config
        features.extend(
            (
                float(cfg.replicas),
                float(cfg.cpu_millicores),
                float(cfg.memory_mb),
                float(cfg.gpu_rate_ratio),
                float(s.queue_depth),
                float(s.cpu_util),
                float(s.gpu_util_quota),
            )
        )
    features.extend((float(state.p99_ms), float(state.throughput_rps)))
    return tuple(features)


@dataclass(frozen=True)
class Experience:
    """One stored decision outcome."""

    context: tuple[float, ...]
    action: ScalingAction
    reward: float
    round: int
    source: str = "mock"

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "context": list(self.context),
            "action": self.action.to_dict(),
            "reward": self.reward,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Experience:
        return cls(
            context=tuple(float(v) for v in data["context"]),
            action=ScalingAction.from_dict(data["action"]),
            reward=float(data["reward"]),
            round=int(data["round"]),
            source=str(data.get("source", "mock")),
        )


@dataclass(frozen=True)
class SelectionConfig:
    """
    Retrieval parameters.

    Attributes:
        m: Maximum number of experiences in the prompt
        lambda_div: Diversity penalty weight
        sigma_sim: Kernel bandwidth; None uses the buffer's median
            pairwise distance
        mode: surprisal (greedy), similarity (top-M kernel) or random
        baseline: global or local (similarity-weighted) leave-one-out mean
    """

    m: int = CONTEXT_SIZE_M
    lambda_div: float = LAMBDA_DIV
    sigma_sim: float | None = None
    mode: SelectionMode = "surprisal"
    baseline: SurpriseBaseline = "global"

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigurationError(f"m must be >= 1, got {self.m}")
        if self.lambda_div < 0:
            raise ConfigurationError(f"lambda_div must be >= 0, got {self.lambda_div}")
        if self.sigma_sim is not None and self.sigma_sim <= 0:
            raise ConfigurationError(f"sigma_sim must be > 0, got {self.sigma_sim}")
        if self.mode not in ("surprisal", "similarity", "random"):
            raise ConfigurationError(f"unknown selection mode {self.mode!r}")
        if self.baseline not in ("global", "local"):
            raise ConfigurationError(f"unknown surprise baseline {self.baseline!r}")


def similarity(x_e: Sequence[float], x_curr: Sequence[float], sigma: float) -> float:
    """
    Gaussian kernel exp(-||x_e - x_curr||^2 / (2 sigma^2)).

    Raises:
        ValueError: On dimension mismatch or sigma <= 0
    """
    a = np.asarray(x_e, dtype=float)
    b = np.asarray(x_curr, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return float(np.exp(-np.sum((a - b) ** 2) / (2.0 * sigma**2)))


def relative_similarity(x_e: Sequence[float], x_curr: Sequence[float]) -> float:
    """
    Kernel similarity after scaling each dimension by the current context's
    magnitude (at least 1); usable without buffer statistics.
    """
    a = np.asarray(x_e, dtype=float)
    b = np.asarray(x_curr, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    scale = np.maximum(np.abs(b), 1.0)
    return similarity(a / scale, b / scale, 1.0)


def _kernel_matrix(a: np.ndarray, b: np.ndarray, sigma: float) -> np.ndarray:
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma**2))


@dataclass
class ExperienceBuffer:
    """
    Append-only store of experiences with reward > r_min.

    Attributes:
        r_min: Reward threshold; set to -inf to keep everything
        experiences: Stored experiences in insertion order
        rejected: Experiences filtered out by the threshold
    """

    r_min: float = R_MIN
    experiences: list[Experience] = field(default_factory=list)
    rejected: int = 0
    _sigma: float | None = field(default=None, repr=False)
    _since_refresh: int = field(default=0, repr=False)

    def __len__(self) -> int:
        return len(self.experiences)

    @property
    def offered(self) -> int:
        return len(self.experiences) + self.rejected

    @property
    def filter_rate(self) -> float:
        """Fraction of offered experiences that were rejected."""
        return self.rejected / self.offered if self.offered else 0.0

    def store(self, experience: Experience) -> bool:
        """
        Append experience iff its reward exceeds r_min.

        Returns:
            True if stored, False if rejected
        """
        if not experience.reward > self.r_min:
            self.rejected += 1
            return False
        self._append(experience)
        return True

    def _append(self, experience: Experience) -> None:
        if self.experiences and len(experience.context) != len(self.experiences[0].context):
            raise ValueError(
                f"context dimension {len(experience.context)} does not match buffer "
                f"dimension {len(self.experiences[0].context)}"
            )
        self.experiences.append(experience)
        self._since_refresh += 1
        if self._since_refresh >= SIGMA_REFRESH_INTERVAL:
            self._sigma = None

    # ------------------------------------------------------------------
    # Statistics
    # ------------------------------------------------------------------

    def contexts(self) -> np.ndarray:
        return np.asarray([e.context for e in self.experiences], dtype=float)

    def rewards(self) -> np.ndarray:
        return np.asarray([e.reward for e in self.experiences], dtype=float)

    def _moments(self) -> tuple[np.ndarray, np.ndarray]:
        data = self.contexts()
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        std[std < 1e-12] = 1.0
        return mean, std

    def standardize(self, x: Sequence[float] | np.ndarray) -> np.ndarray:
        """z-score x (a vector or matrix of rows) with buffer statistics."""
        arr = np.asarray(x, dtype=float)
        if not self.experiences:
            return arr
        mean, std = self._moments()
        return (arr - mean) / std

    def sigma(self, config: SelectionConfig | None = None) -> float:
        """
        Kernel bandwidth: the configured value, else the median pairwise
        distance of standardized contexts, refreshed every
        SIGMA_REFRESH_INTERVAL insertions.
        """
        if config is not None and config.sigma_sim is not None:
            return config.sigma_sim
        if self._sigma is None:
            self._sigma = self._median_distance()
            self._since_refresh = 0
        return self._sigma

    def _median_distance(self) -> float:
        n = len(self.experiences)
        if n < 2:
            return 1.0
        z = self.standardize(self.contexts())
        if n > _SIGMA_SAMPLE:
            z = z[np.linspace(0, n - 1, _SIGMA_SAMPLE).astype(int)]
        diff = z[:, None, :] - z[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        upper = dist[np.triu_indices(len(z), k=1)]
        median = float(np.median(upper))
        return median if median > 1e-12 else 1.0

    # ------------------------------------------------------------------
    # Scoring
    # ------------------------------------------------------------------

    def similarities(
        self, x_curr: Sequence[float], config: SelectionConfig | None = None
    ) -> np.ndarray:
        """Kernel similarity of every stored context to x_curr."""
        if not self.experiences:
            return np.zeros(0)
        z = self.standardize(self.contexts())
        zc = self.standardize(x_curr)
        if zc.shape[-1] != z.shape[1]:
            raise ValueError(f"dimension mismatch: {zc.shape[-1]} vs {z.shape[1]}")
        return _kernel_matrix(z, zc[None, :], self.sigma(config))[:, 0]

    def residuals(self, config: SelectionConfig | None = None) -> np.ndarray:
        """|r_e - leave-one-out expected reward| for every stored experience."""
        rewards = self.rewards()
        n = len(rewards)
        if n == 0:
            return np.zeros(0)
        if n == 1:
            logger.debug("single-experience buffer: leave-one-out mean taken as 0")
            return np.abs(rewards)
        if config is not None and config.baseline == "local":
            z = self.standardize(self.contexts())
            kernel = _kernel_matrix(z, z, self.sigma(config))
            np.fill_diagonal(kernel, 0.0)
            weights = kernel.sum(axis=1)
            global_mean = (rewards.sum() - rewards) / (n - 1)
            with np.errstate(invalid="ignore", divide="ignore"):
                local_mean = (kernel @ rewards) / weights
            baseline = np.where(weights > 1e-12, local_mean, global_mean)
        else:
            baseline = (rewards.sum() - rewards) / (n - 1)
        return np.abs(rewards - baseline)

    def scores(self, x_curr: Sequence[float], config: SelectionConfig | None = None) -> np.ndarray:
        """Surprisal score of every stored experience against x_curr."""
        return self.similarities(x_curr, config) * self.residuals(config)

    def index_of(self, experience: Experience) -> int:
        for i, e in enumerate(self.experiences):
            if e is experience:
                return i
        return self.experiences.index(experience)


def store(buffer: ExperienceBuffer, experience: Experience) -> ExperienceBuffer:
    """Functional form of ExperienceBuffer.store."""
    buffer.store(experience)
    return buffer


def surprisal_score(
    buffer: ExperienceBuffer,
    experience: Experience,
    x_curr: Sequence[float],
    config: SelectionConfig | None = None,
) -> float:
    """
    Surprisal of one stored experience against the current context.

    Raises:
        ValueError: If experience is not in the buffer
    """
    index = buffer.index_of(experience)
    return float(buffer.scores(x_curr, config)[index])


def selection_objective(
    buffer: ExperienceBuffer,
    indices: Iterable[int],
    x_curr: Sequence[float],
    config: SelectionConfig,
) -> float:
    """Sum of surprisal scores minus lambda_div times pairwise similarity."""
    chosen = list(indices)
    if not chosen:
        return 0.0
    scores = buffer.scores(x_curr, config)
    z = buffer.standardize(buffer.contexts())[chosen]
    kernel = _kernel_matrix(z, z, buffer.sigma(config))
    pairwise = (kernel.sum() - np.trace(kernel)) / 2.0
    return float(scores[chosen].sum() - config.lambda_div * pairwise)


def greedy_indices(
    buffer: ExperienceBuffer, x_curr: Sequence[float], config: SelectionConfig
) -> list[int]:
    """
    Greedy maximization of the diversity-regularized surprisal objective.

    Each step adds the experience with the largest marginal gain; ties go
    to the lower round number. Returns min(M, |buffer|) indices in pick
    order.
    """
    n = len(buffer)
    if n == 0:
        return []
    scores = buffer.scores(x_curr, config)
    rounds = np.asarray([e.round for e in buffer.experiences])
    z = buffer.standardize(buffer.contexts())
    sigma = buffer.sigma(config)
    penalty = np.zeros(n)
    available = np.ones(n, dtype=bool)
    chosen: list[int] = []
    for _ in range(min(config.m, n)):
        gains = np.where(available, scores - penalty, -np.inf)
        best = gains.max()
        ties = np.flatnonzero(available & (np.abs(gains - best) <= 1e-12))
        pick = int(ties[np.argmin(rounds[ties])])
        chosen.append(pick)
        available[pick] = False
        if config.lambda_div > 0:
            penalty += config.lambda_div * _kernel_matrix(z, z[pick : pick + 1], sigma)[:, 0]
    return chosen


def select_experiences(
    buffer: ExperienceBuffer,
    x_curr: Sequence[float],
    config: SelectionConfig,
    rng: np.random.Generator | None = None,
) -> list[Experience]:
    """
    Choose up to M experiences for the prompt, ordered by reward ascending.

    Args:
        buffer: Experience buffer
        x_curr: Current context vector (raw, unstandardized)
        config: Selection parameters
        rng: Random stream, used only by random mode

    Returns:
        Selected experiences, lowest reward first; empty for an empty buffer
    """
    n = len(buffer)
    if n == 0:
        return []
    if config.mode == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        indices = [int(i) for i in rng.choice(n, size=min(config.m, n), replace=False)]
    elif config.mode == "similarity":
        sims = buffer.similarities(x_curr, config)
        rounds = [e.round for e in buffer.experiences]
        indices = sorted(range(n), key=lambda i: (-sims[i], rounds[i]))[: config.m]
    else:
        indices = greedy_indices(buffer, x_curr, config)
    selected = [buffer.experiences[i] for i in indices]
    return sorted(selected, key=lambda e: (e.reward, e.round))


def persist(buffer: ExperienceBuffer, path: str | Path) -> Path:
    """
    Write the buffer as JSON Lines, one experience per line.

    Returns:
        The written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as fh:
        for e in buffer.experiences:
            fh.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
    return target


def load(path: str | Path, *, r_min: float = R_MIN) -> ExperienceBuffer:
    """
    Read a JSON Lines experience file.

    Corrupt lines are skipped with a warning. Every record passes through
    ExperienceBuffer.store, so records at or below r_min are rejected and
    logged; pass r_min=-inf to restore a store-all buffer.
    """
    buffer = ExperienceBuffer(r_min=r_min)
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                experience = Experience.from_dict(json.loads(line))
                if not all(math.isfinite(v) for v in experience.context):
                    raise ValueError("non-finite context value")
                stored = buffer.store(experience)
            except (ValueError, KeyError, TypeError) as exc:
                logger.warning(
                    "skipping corrupt experience record at %s:%d (%s)", path, lineno, exc
                )
                continue
            if not stored:
                logger.warning(
                    "rejecting experience at %s:%d: reward %.4f <= r_min %.4f",
                    path,
                    lineno,
                    experience.reward,
                    r_min,
                )
    return buffer
