"""
Two-objective Pareto frontier over (normalized latency, normalized cost).

Both objectives are minimized and normalized into [0, 1]; hypervolume is
measured toward the reference point (1, 1). The frontier is immutable:
update_frontier returns a new instance, so snapshots can be attached to
pipeline states and shared with oracle rollouts.
"""

import logging
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .config import DOMINATED_REWARD_SCALE
from .utils import ConfigurationError, validate_non_negative

logger = logging.getLogger(__name__)

Point = tuple[float, float]
REFERENCE_POINT: Point = (1.0, 1.0)


class NoFrontierError(ValueError):
    """Raised when a distance is requested against an empty frontier."""


class DominatedPointError(ValueError):
    """Raised when a hypervolume contribution is requested for a dominated point."""


def dominates(p: Point, q: Point) -> bool:
    """True if p <= q componentwise with at least one strict inequality."""
    return p[0] <= q[0] and p[1] <= q[1] and (p[0] < q[0] or p[1] < q[1])


def non_dominated(points: Iterable[Point]) -> tuple[Point, ...]:
    """
    Non-dominated subset, sorted by latency ascending, duplicates merged.

    O(n log n) sweep: after sorting by (L, C) a point survives iff its cost
    is strictly below every cost seen before it.
    """
    result: list[Point] = []
    best_cost = float("inf")
    for point in sorted(set(points)):
        if point[1] < best_cost:
            result.append(point)
            best_cost = point[1]
    return tuple(result)


def hypervolume(points: Iterable[Point]) -> float:
    """
    Area dominated by points inside the unit square, toward (1, 1).

    Examples:
        >>> hypervolume([(0.5, 0.5)])
        0.25
    """
    front = non_dominated(points)
    area = 0.0
    for i, (latency, cost) in enumerate(front):
        next_latency = front[i + 1][0] if i + 1 < len(front) else REFERENCE_POINT[0]
        area += (next_latency - latency) * (REFERENCE_POINT[1] - cost)
    return area


@dataclass(frozen=True)
class ParetoFrontier:
    """
    Non-dominated (L~, C~) points with their normalizers.

    Attributes:
        points: Non-dominated points, latency ascending
        l_max: Latency normalizer (ms)
        c_max: Cost normalizer ($ per interval)
    """

    l_max: float
    c_max: float
    points: tuple[Point, ...] = ()

    def __post_init__(self) -> None:
        if self.l_max <= 0 or self.c_max <= 0:
            raise ConfigurationError(
                f"frontier normalizers must be > 0, got l_max={self.l_max}, c_max={self.c_max}"
            )

    def __len__(self) -> int:
        return len(self.points)

    def normalize(self, latency_ms: float, cost: float) -> tuple[Point, bool]:
        """
        Map raw (latency, cost) into the unit square.

        Returns:
            (point, clamped) where clamped is True if an axis exceeded its
            normalizer and was set to 1.0
        """
        validate_non_negative(latency_ms, "latency_ms")
        validate_non_negative(cost, "cost")
        l_norm = latency_ms / self.l_max
        c_norm = cost / self.c_max
        clamped = l_norm > 1.0 or c_norm > 1.0
        return (min(1.0, l_norm), min(1.0, c_norm)), clamped

    def is_dominated(self, point: Point) -> bool:
        return any(dominates(p, point) for p in self.points)

    @property
    def hypervolume(self) -> float:
        return hypervolume(self.points)

    def insert(self, point: Point) -> "ParetoFrontier":
        """Return a frontier with a normalized point inserted if non-dominated."""
        if self.is_dominated(point):
            return self
        kept = tuple(p for p in self.points if not dominates(point, p))
        return ParetoFrontier(self.l_max, self.c_max, non_dominated((*kept, point)))

    def to_dict(self) -> dict[str, object]:
        return {
            "l_max": self.l_max,
            "c_max": self.c_max,
            "points": [list(p) for p in self.points],
            "hypervolume": self.hypervolume,
        }


def update_frontier(frontier: ParetoFrontier, latency_ms: float, cost: float) -> ParetoFrontier:
    """
    Insert a raw (latency, cost) observation.

    The point is normalized first; axes above their normalizer are clamped
    to 1.0 and a warning is logged. Points it dominates are removed; a
    dominated point leaves the frontier unchanged.

    Args:
        frontier: Current frontier
        latency_ms: Observed P99 latency
        cost: Observed cost for the interval

    Returns:
        Updated frontier (a new instance unless unchanged)
    """
    point, clamped = frontier.normalize(latency_ms, cost)
    if clamped:
        logger.warning(
            "frontier point clamped: latency=%.1fms (max %.1f), cost=%.4f (max %.4f)",
            latency_ms,
            frontier.l_max,
            cost,
            frontier.c_max,
        )
    return frontier.insert(point)


def hypervolume_contribution(frontier: ParetoFrontier, point: Point) -> float:
    """
    Exclusive hypervolume gained by adding point: HV(F + {p}) - HV(F).

    Raises:
        DominatedPointError: If point is dominated by the frontier

    Examples:
        >>> hypervolume_contribution(ParetoFrontier(1.0, 1.0), (0.5, 0.5))
        0.25
    """
    if frontier.is_dominated(point):
        raise DominatedPointError(f"point {point} is dominated by the frontier")
    return max(0.0, hypervolume((*frontier.points, point)) - frontier.hypervolume)


def frontier_distance(frontier: ParetoFrontier, point: Point) -> float:
    """
    Euclidean distance from point to the nearest frontier point.

    Raises:
        NoFrontierError: If the frontier is empty
    """
    if not frontier.points:
        raise NoFrontierError("frontier is empty")
    pts = np.asarray(frontier.points, dtype=float)
    deltas = pts - np.asarray(point, dtype=float)
    return float(np.min(np.hypot(deltas[:, 0], deltas[:, 1])))


def pareto_reward(frontier: ParetoFrontier, point: Point) -> float:
    """
    Dominance-shaped reward in [0, 2].

    Non-dominated points earn 1 + their hypervolume contribution; dominated
    points earn 0.8 / (1 + distance to the frontier), so any non-dominated
    point outscores any dominated one by at least 0.2.
    """
    if not frontier.is_dominated(point):
        return 1.0 + hypervolume_contribution(frontier, point)
    return DOMINATED_REWARD_SCALE / (1.0 + frontier_distance(frontier, point))
