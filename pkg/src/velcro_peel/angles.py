"""Angle helpers shared by the simulator, filter, and cost modules."""

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle), TWO_PI)


def wrap_scalar(angle: float) -> float:
    """Scalar fast path of wrap_angle for the simulator hot loops."""
    return math.pi - (math.pi - angle) % TWO_PI


def circular_mean(angles, weights=None) -> float:
    """Weighted circular mean via the mean resultant vector."""
    a = np.asarray(angles, dtype=float)
    if weights is None:
        s, c = np.sin(a).sum(), np.cos(a).sum()
    else:
        w = np.asarray(weights, dtype=float)
        s, c = float(w @ np.sin(a)), float(w @ np.cos(a))
    return math.atan2(s, c)
