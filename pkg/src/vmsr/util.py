"""Small shared helpers: RNG streams and angle arithmetic."""

from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def substream(*keys: int) -> np.random.Generator:
    """Deterministic RNG derived from a tuple of non-negative integer keys.

    Parallel and serial consumers that derive their stream from the same
    keys see identical sequences, which is what makes per-item parallelism
    reproducible.
    """
    for k in keys:
        if k < 0:
            raise ValueError(f"rng keys must be non-negative, got {keys}")
    return np.random.default_rng(list(keys))


def wrap_angle(theta: float) -> float:
    """Map an angle to [0, 2*pi)."""
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    return theta


def angle_diff(a: float, b: float) -> float:
    """Signed smallest rotation taking heading b onto heading a, in (-pi, pi]."""
    d = math.fmod(a - b, TWO_PI)
    if d > math.pi:
        d -= TWO_PI
    elif d <= -math.pi:
        d += TWO_PI
    return d
