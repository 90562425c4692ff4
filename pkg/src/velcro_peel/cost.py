"""Potential-based energy cost of actions and per-episode metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from velcro_peel.angles import wrap_angle
from velcro_peel.simulator import Action, StepOutcome


@dataclass(frozen=True)
class CostConfig:
    """Path weights: c1 per cm of peel, c2 per radian of rotation."""

    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("cost weights must be positive")


@dataclass(frozen=True)
class EpisodeMetrics:
    total_cost: float
    success: bool
    steps: int
    terminal_event: str

    def __post_init__(self):
        if self.total_cost < 0:
            raise ValueError("episode cost cannot be negative")
        if self.success and self.terminal_event != "fully_peeled":
            raise ValueError("successful episodes must end fully peeled")


def potential(phi, theta):
    """Configuration potential: 1 plus the squared deviation from a right angle."""
    dev = wrap_angle(np.asarray(phi) - np.asarray(theta) - 0.5 * np.pi)
    return 1.0 + dev * dev


def action_cost(outcome: StepOutcome, action: Action, cfg: CostConfig) -> float:
    """Line integral of the potential along the action's recorded path."""
    path = outcome.path_samples
    if len(path) < 2:
        return 0.0
    u = potential(path[:, 1], path[:, 2])
    if action.s == 0:
        return cfg.c1 * float(np.trapezoid(u, path[:, 0]))
    return cfg.c2 * abs(float(np.trapezoid(u, path[:, 1])))


def aggregate(episodes) -> tuple[float, float]:
    """(mean cost over successful episodes, success rate in percent)."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("aggregate requires at least one episode")
    wins = [e.total_cost for e in episodes if e.success]
    rate = 100.0 * len(wins) / len(episodes)
    mean_cost = float(np.mean(wins)) if wins else float("nan")
    return mean_cost, rate


def mean_cost_all(episodes) -> float:
    """Mean cost over every episode, failed ones included."""
    episodes = list(episodes)
    if not episodes:
        raise ValueError("aggregate requires at least one episode")
    return float(np.mean([e.total_cost for e in episodes]))
