"""
Shared utility functions for pipescale.

Validation helpers and grid snapping used across multiple modules.
"""

import math
from collections.abc import Sequence

GRID_TOLERANCE = 1e-9


def validate_positive(value: float, name: str) -> None:
    """
    Validate that a number is finite and strictly positive.

    Args:
        value: Number to validate
        name: Parameter name used in the error message

    Raises:
        TypeError: If value is not a real number
        ValueError: If value <= 0 or not finite
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")


def validate_non_negative(value: float, name: str) -> None:
    """Validate that a number is finite and >= 0."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")


def validate_fraction(value: float, name: str, *, low: float = 0.0, high: float = 1.0) -> None:
    """
    Validate that a number lies in the closed interval [low, high].

    Raises:
        TypeError: If value is not a real number
        ValueError: If value is outside [low, high]
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"{name} must be a number, got {type(value).__name__}")
    if not (low <= value <= high):
        raise ValueError(f"{name} must be in [{low}, {high}], got {value}")


def clamp(value: float, low: float, high: float) -> float:
    """Clamp value into [low, high]."""
    return max(low, min(high, value))


def snap_to_grid(raw: float, grid: Sequence[float]) -> float:
    """
    Snap a raw value to the nearest grid value.

    Ties resolve toward the value with the smaller magnitude, so a raw
    delta exactly between two grid steps produces the more conservative one.
    Non-finite input snaps to the grid value closest to zero.

    Args:
        raw: Raw value
        grid: Candidate grid values

    Returns:
        The chosen grid value

    Examples:
        >>> snap_to_grid(3, (-1, 0, 1, 2))
        2
        >>> snap_to_grid(0.15, (-0.1, 0.0, 0.1, 0.2))
        0.1
    """
    if not grid:
        raise ValueError("grid must be non-empty")
    if not math.isfinite(raw):
        return min(grid, key=abs)
    return min(grid, key=lambda g: (round(abs(g - raw), 9), abs(g)))


def on_grid(value: float, grid: Sequence[float]) -> bool:
    """Return True if value equals some grid value within tolerance."""
    return any(abs(value - g) <= GRID_TOLERANCE for g in grid)


def coerce_number(value: object) -> float | None:
    """
    Leniently parse a number from JSON-ish input.

    Accepts ints, floats and numeric strings ("3", " 0.7 "). Booleans,
    non-numeric strings and non-finite values return None.
    """
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, str):
        try:
            parsed = float(value.strip())
        except ValueError:
            return None
        return parsed if math.isfinite(parsed) else None
    return None


class ConfigurationError(ValueError):
    """Raised when a component is configured with out-of-range parameters."""
