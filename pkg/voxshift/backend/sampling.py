import math


def validate_fraction(fraction: float, name: str = "fraction") -> float:
    """Return fraction as a float, rejecting values outside (0, 1]."""
    fraction = float(fraction)
    if not 0.0 < fraction <= 1.0 or math.isnan(fraction):
        raise ValueError(f"{name} must lie in (0, 1], got {fraction}")
    return fraction


def sample_size(fraction: float, count: int) -> int:
    """ceil(fraction * count), ignoring float noise below 1e-9 (0.07 * 100 is 7, not 8)."""
    return math.ceil(round(fraction * count, 9))
