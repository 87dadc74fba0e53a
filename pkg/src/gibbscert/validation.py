"""Small domain-validation helpers shared across the numeric modules."""

from __future__ import annotations

import numpy as np


def check_probability(name: str, value: float) -> float:
    """Require value in the closed interval [0, 1]."""
    value = float(value)
    if not 0.0 <= value <= 1.0 or not np.isfinite(value):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_open_probability(name: str, value: float) -> float:
    """Require value in the open interval (0, 1)."""
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {value!r}")
    return value


def check_nonnegative(name: str, value: float) -> float:
    value = float(value)
    if value < 0.0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite nonnegative real, got {value!r}")
    return value


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if value <= 0.0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite positive real, got {value!r}")
    return value


def check_positive_int(name: str, value: int) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be an integer >= 1, got {value!r}")
    return int(value)


def check_confidence(name: str, value: float) -> float:
    """Require a confidence level in (0, 1]."""
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise ValueError(f"{name} must lie in (0, 1], got {value!r}")
    return value
