"""2D world: platform kinematics, the field-of-view limited range-bearing
sensor, and episode bookkeeping.

Angles follow the drawing convention of the motion model: a platform with
heading ``phi`` moves along ``(cos phi, -sin phi)``, so the y axis points down
and a positive bearing is reached by a positive turn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

# Bearing conventions.  "forward" measures the direction observer -> point, so
# boresight is bearing 0.  "paper_literal" uses the point -> observer
# difference with a plain atan2; kept for fidelity experiments only.
FORWARD = "forward"
PAPER_LITERAL = "paper_literal"
CONVENTIONS = (FORWARD, PAPER_LITERAL)


def wrap_angle(angle: float) -> float:
    """Wrap an angle to [-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class PlatformState:
    """Pose and speeds of one vehicle.

    ``rot_speed`` is the currently commanded rotational velocity in rad per
    second; heading advances by ``rot_speed * step_time`` each step.
    """

    position: tuple[float, float]
    heading: float
    forward_speed: float
    rot_speed: float = 0.0

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.position, dtype=float)


@dataclass(frozen=True)
class SensorSpec:
    fov_opening: float
    sigma_range: float
    sigma_bearing: float
    convention: str = FORWARD

    def __post_init__(self):
        if not 0.0 < self.fov_opening <= 2.0 * math.pi:
            raise ValueError(f"fov_opening must lie in (0, 2pi], got {self.fov_opening}")
        if self.sigma_range < 0.0 or self.sigma_bearing < 0.0:
            raise ValueError("sensor noise std must be non-negative")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown bearing convention {self.convention!r}")


@dataclass(frozen=True)
class Measurement:
    range: float
    bearing: float
    step_index: int


@dataclass(frozen=True)
class InitSpec:
    """Initial-condition distribution for a fresh episode."""

    observer_speed: float = 50.0
    target_speed: float = 20.0
    r_init_min: float = 500.0
    r_init_max: float = 2000.0
    fov_opening: float = 1.4
    d_max: float = 5000.0

    def __post_init__(self):
        if not 0.0 < self.r_init_min <= self.r_init_max:
            raise ValueError("need 0 < r_init_min <= r_init_max")
        if self.r_init_max >= self.d_max:
            raise ValueError(
                f"r_init_max={self.r_init_max} >= d_max={self.d_max}: "
                "episodes would terminate immediately"
            )


@dataclass
class WorldState:
    """Ground truth of one episode.

    The generator is carried along and advanced in place by :func:`sense`;
    everything else is treated as a value.
    """

    observer: PlatformState
    target: PlatformState
    step: int = 0
    steps_since_measurement: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng, repr=False)


def step_platform(state: PlatformState, step_time: float) -> PlatformState:
    """Advance one platform by ``step_time`` seconds."""
    x, y = state.position
    dist = step_time * state.forward_speed
    return replace(
        state,
        position=(x + dist * math.cos(state.heading), y - dist * math.sin(state.heading)),
        heading=wrap_angle(state.heading + step_time * state.rot_speed),
    )


def polar_offset(distance: float, angle: float, convention: str = FORWARD) -> tuple[float, float]:
    """Inverse of :func:`relative_polar` in the global frame.

    ``angle`` is the global direction (heading + bearing).  Returns the
    point minus the origin.
    """
    if convention == FORWARD:
        return distance * math.cos(angle), -distance * math.sin(angle)
    return -distance * math.cos(angle), -distance * math.sin(angle)


def relative_polar(
    origin: PlatformState, to_position, convention: str = FORWARD
) -> tuple[float, float]:
    """Distance and heading-relative bearing from ``origin`` to a point.

    Coincident positions give ``(0.0, 0.0)``.
    """
    dx = float(to_position[0]) - origin.position[0]
    dy = float(to_position[1]) - origin.position[1]
    distance = math.hypot(dx, dy)
    if distance == 0.0:
        return 0.0, 0.0
    if convention == FORWARD:
        direction = math.atan2(-dy, dx)
    else:
        direction = math.atan2(-dy, -dx)
    return distance, wrap_angle(direction - origin.heading)


def sense(world: WorldState, spec: SensorSpec) -> Measurement | None:
    """Fire the sensor once.

    Gating uses the noise-free bearing.  Updates
    ``world.steps_since_measurement`` in place.
    """
    distance, bearing = relative_polar(world.observer, world.target.position, spec.convention)
    if abs(bearing) >= 0.5 * spec.fov_opening:
        world.steps_since_measurement += 1
        return None
    noise = world.rng.standard_normal(2)
    world.steps_since_measurement = 0
    return Measurement(
        range=float(distance + spec.sigma_range * noise[0]),
        bearing=wrap_angle(float(bearing + spec.sigma_bearing * noise[1])),
        step_index=world.step,
    )


def reset(seed, init: InitSpec, convention: str = FORWARD) -> WorldState:
    """Sample a fresh world with the target inside the sensor's field of view."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(init.r_init_min, init.r_init_max)
    half = 0.5 * init.fov_opening
    bearing = rng.uniform(-half, half)
    heading = rng.uniform(-math.pi, math.pi)
    observer = PlatformState((0.0, 0.0), 0.0, init.observer_speed)
    ox, oy = polar_offset(r, bearing, convention)
    target = PlatformState((ox, oy), heading, init.target_speed)
    return WorldState(observer=observer, target=target, rng=rng)
