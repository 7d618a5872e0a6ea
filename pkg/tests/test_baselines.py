import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from uavtrack.baselines import OBSERVER, TARGET, PController, RandomPolicy, p_observer, p_target, random_action
from uavtrack.sim import PlatformState, WorldState

bearings = st.floats(-math.pi, math.pi)


def test_random_action_moments_and_support():
    rng = np.random.default_rng(0)
    draws = np.array([random_action(rng) for _ in range(100_000)])
    assert abs(draws.mean()) < 0.01
    assert draws.min() >= -1.0 and draws.max() <= 1.0


def test_random_action_reproducible():
    a = [random_action(np.random.default_rng(3)) for _ in range(3)]
    b = [random_action(np.random.default_rng(3)) for _ in range(3)]
    assert a == b


@pytest.mark.parametrize("theta, expected", [(0.0, 0.0), (math.pi / 2, 0.5), (-math.pi, -1.0)])
def test_p_observer(theta, expected):
    assert p_observer(theta, 1.0) == pytest.approx(expected)


@pytest.mark.parametrize("theta, expected", [(math.pi, 0.0), (math.pi / 2, 0.1), (0.0, 0.2)])
def test_p_target(theta, expected):
    assert p_target(theta, 0.2) == pytest.approx(expected)


@given(bearings, st.floats(0.01, 10.0))
def test_p_controllers_bounded(theta, gain):
    assert -1.0 <= p_observer(theta, gain) <= 1.0
    assert -1.0 <= p_target(theta, gain) <= 1.0


@given(bearings)
def test_p_observer_turns_toward_target(theta):
    assume(abs(theta) > 1e-12)
    assert np.sign(p_observer(theta)) == np.sign(theta)


def test_pcontroller_reads_ground_truth():
    world = WorldState(PlatformState((0.0, 0.0), 0.0, 50.0), PlatformState((0.0, -1000.0), 0.0, 20.0))
    assert PController(OBSERVER, 1.0).act(None, world) == pytest.approx(0.5)
    # observer at -pi/2 from the target; a positive turn moves away from it
    assert PController(TARGET, 0.2).act(None, world) == pytest.approx(0.1)


def test_target_pcontroller_flees():
    from dataclasses import replace

    from uavtrack.env import scale_action
    from uavtrack.sim import relative_polar, step_platform

    ctrl = PController(TARGET, 0.2)
    for start in (0.3, 1.5, 2.5):
        world = WorldState(PlatformState((0.0, 0.0), 0.0, 0.0), PlatformState((1000.0, 0.0), math.pi + start, 20.0))
        for _ in range(100):
            omega = scale_action(ctrl.act(None, world), -0.75, 0.75)
            world.target = step_platform(replace(world.target, rot_speed=omega), 2.0)
        d, bearing = relative_polar(world.target, world.observer.position)
        assert d > 4000.0 and abs(bearing) > 3.0


def test_policy_validation():
    with pytest.raises(ValueError):
        RandomPolicy("pilot")
    with pytest.raises(ValueError):
        PController(OBSERVER, 0.0)
