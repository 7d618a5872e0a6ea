"""Non-learned reference policies.

Every policy exposes ``act(obs, world, rng) -> float``.  Learned policies use
``obs``; the P-controllers read ground-truth geometry from ``world`` and never
the track.
"""

from __future__ import annotations

import math

import numpy as np

from .sim import FORWARD, WorldState, relative_polar

OBSERVER = "observer"
TARGET = "target"
ROLES = (OBSERVER, TARGET)


def random_action(rng: np.random.Generator) -> float:
    return float(rng.uniform(-1.0, 1.0))


def p_observer(true_bearing_to_target: float, gain: float = 1.0) -> float:
    return min(1.0, max(-1.0, gain * true_bearing_to_target / math.pi))


def p_target(true_bearing_to_observer: float, gain: float = 0.2) -> float:
    # sgn(0) := +1 so a dead-ahead observer still triggers an evasive turn
    sign = -1.0 if true_bearing_to_observer < 0.0 else 1.0
    a = sign * gain * (1.0 - abs(true_bearing_to_observer) / math.pi)
    return min(1.0, max(-1.0, a))


class RandomPolicy:
    policy_id = "random"

    def __init__(self, role: str):
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        self.role = role

    def act(self, obs, world: WorldState, rng: np.random.Generator) -> float:
        return random_action(rng)


class PController:
    policy_id = "pctrl"

    def __init__(self, role: str, gain: float, convention: str = FORWARD):
        if role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if gain <= 0:
            raise ValueError("gain must be positive")
        self.role = role
        self.gain = gain
        self.convention = convention

    def act(self, obs, world: WorldState, rng=None) -> float:
        if self.role == OBSERVER:
            _, bearing = relative_polar(world.observer, world.target.position, self.convention)
            return p_observer(bearing, self.gain)
        _, bearing = relative_polar(world.target, world.observer.position, self.convention)
        # a positive turn closes a positive bearing, so the formula needs the
        # mirrored angle to turn away from the observer
        return p_target(-bearing, self.gain)
