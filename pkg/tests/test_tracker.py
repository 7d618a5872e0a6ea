import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from uavtrack import sim, tracker
from uavtrack.sim import Measurement, PlatformState, SensorSpec
from uavtrack.tracker import DwpaModel, FilterDivergenceError, Track

from conftest import rel_err

SPEC = SensorSpec(1.4, 40.0, 0.005)


def obs_at(x=0.0, y=0.0, heading=0.0):
    return PlatformState((x, y), heading, 50.0)


def test_predict_constant_velocity():
    t = Track(np.array([0.0, 0.0, 10.0, 0.0]), np.eye(4))
    out = tracker.predict(t, DwpaModel(5.0, 2.0))
    np.testing.assert_allclose(out.mean, [20.0, 0.0, 10.0, 0.0])


def test_predict_zero_prior_gives_q():
    model = DwpaModel(3.0, 2.0)
    out = tracker.predict(Track(np.zeros(4), np.zeros((4, 4))), model)
    np.testing.assert_array_equal(out.covariance, model.process_noise())


def test_dwpa_blocks():
    Q = DwpaModel(2.0, 2.0).process_noise()
    # q * [[dt^4/4, dt^3/2], [dt^3/2, dt^2]] with q=4, dt=2
    np.testing.assert_allclose(Q[np.ix_([0, 2], [0, 2])], [[16.0, 16.0], [16.0, 16.0]])
    assert Q[0, 1] == Q[0, 3] == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_predict_nonfinite_raises():
    t = Track(np.array([0.0, 0.0, np.inf, 0.0]), np.eye(4))
    with pytest.raises(FilterDivergenceError):
        tracker.predict(t, DwpaModel())


@settings(max_examples=50)
@given(
    st.floats(-3000, 3000), st.floats(-3000, 3000),
    st.floats(-math.pi, math.pi), st.floats(-500, 500), st.floats(-500, 500),
)
def test_jacobian_matches_finite_differences(tx, ty, heading, ox, oy):
    state = np.array([tx, ty, 5.0, -3.0])
    obs = obs_at(ox, oy, heading)
    if math.hypot(tx - ox, ty - oy) < 50.0:
        return
    _, bearing = sim.relative_polar(obs, state[:2])
    if abs(abs(bearing) - math.pi) < 1e-3:
        return
    H = tracker.measurement_jacobian(state, obs)
    num = np.zeros((2, 4))
    h = 1e-3
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        zp = tracker.measurement_function(state + e, obs)
        zm = tracker.measurement_function(state - e, obs)
        num[:, j] = (zp - zm) / (2 * h)
    assert np.allclose(H, num, rtol=1e-4, atol=1e-9)


def test_literal_jacobian_matches_finite_differences():
    state = np.array([800.0, -300.0, 0.0, 0.0])
    obs = obs_at(10.0, 20.0, 0.3)
    H = tracker.measurement_jacobian(state, obs, sim.PAPER_LITERAL)
    num = np.zeros((2, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1e-3
        num[:, j] = (tracker.measurement_function(state + e, obs, sim.PAPER_LITERAL)
                     - tracker.measurement_function(state - e, obs, sim.PAPER_LITERAL)) / 2e-3
    assert rel_err(H[:, :2], num[:, :2]) < 1e-4


def test_update_zero_innovation():
    P = np.diag([100.0, 100.0, 10.0, 10.0])
    t = Track(np.array([1000.0, 0.0, 1.0, 2.0]), P)
    out = tracker.update(t, Measurement(1000.0, 0.0, 1), obs_at(), SensorSpec(1.4, 0.0, 0.0))
    np.testing.assert_allclose(out.mean, t.mean, atol=1e-9)
    assert np.trace(out.covariance) <= np.trace(P)


def test_update_wraps_bearing_innovation():
    obs = obs_at()
    t = Track(np.array([-1000.0, 1.0, 0.0, 0.0]), np.diag([100.0, 100.0, 10.0, 10.0]))
    _, b = sim.relative_polar(obs, t.mean[:2])
    meas = Measurement(1000.0, sim.wrap_angle(b + 2 * math.pi - 1e-4), 1)
    out = tracker.update(t, meas, obs, SensorSpec(2 * math.pi, 40.0, 0.005))
    assert np.linalg.norm(out.mean[:2] - t.mean[:2]) < 5.0


def test_update_coincident_track_raises():
    t = Track(np.zeros(4), np.eye(4))
    with pytest.raises(FilterDivergenceError):
        tracker.update(t, Measurement(1.0, 0.0, 1), obs_at(), SPEC)


def test_initialize_on_axis():
    t = tracker.initialize(Measurement(1000.0, 0.0, 0), obs_at(), SPEC)
    np.testing.assert_allclose(t.mean, [1000.0, 0.0, 0.0, 0.0], atol=1e-9)
    assert t.covariance[2, 2] == t.covariance[3, 3] == 900.0


def test_initialize_covariance_orientation_monte_carlo():
    obs = obs_at(100.0, -50.0, 0.4)
    meas = Measurement(1500.0, 0.3, 0)
    spec = SensorSpec(1.4, 40.0, 0.02)
    t = tracker.initialize(meas, obs, spec)
    rng = np.random.default_rng(0)
    n = 200_000
    r = meas.range + spec.sigma_range * rng.standard_normal(n)
    b = meas.bearing + spec.sigma_bearing * rng.standard_normal(n)
    ang = obs.heading + b
    pts = np.column_stack([r * np.cos(ang), -r * np.sin(ang)])
    emp = np.cov(pts.T)
    np.testing.assert_allclose(t.covariance[:2, :2], emp, rtol=0.03, atol=30.0)


def test_entropy_identity():
    assert tracker.entropy(np.eye(4)) == pytest.approx(2 * math.log(2 * math.pi * math.e))
    assert tracker.entropy(np.eye(4)) == pytest.approx(5.6758, abs=1e-3)


def test_entropy_diag():
    assert tracker.entropy(np.diag([100.0, 100.0, 1.0, 1.0])) == pytest.approx(10.2809, abs=1e-3)


def test_entropy_rejects_non_spd():
    with pytest.raises(ValueError):
        tracker.entropy(np.diag([1.0, -1.0, 1.0, 1.0]))


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_entropy_increases_on_predict(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    t = Track(rng.normal(size=4), A @ A.T + 0.1 * np.eye(4))
    model = DwpaModel(rng.uniform(0.5, 10.0), 2.0)
    s = tracker.entropy(t)
    for _ in range(5):
        t = tracker.predict(t, model)
        s_new = tracker.entropy(t)
        assert s_new > s
        s = s_new


def test_track_relative_mirrors_relative_polar():
    t = Track(np.array([0.0, -1000.0, 0.0, 0.0]), np.eye(4))
    d, b = tracker.track_relative(t, obs_at(heading=math.pi / 2))
    assert d == pytest.approx(1000.0) and b == pytest.approx(0.0, abs=1e-12)
    d, b = tracker.track_relative(t, obs_at())
    assert b == pytest.approx(math.pi / 2)
    t = Track(np.array([1000.0, 0.0, 0.0, 0.0]), np.eye(4))
    assert tracker.track_relative(t, obs_at()) == (1000.0, 0.0)


def test_nees_straight_line_consistency():
    spec = SensorSpec(2 * math.pi, 40.0, 0.005)
    model = DwpaModel(accel_std=0.1, step_time=2.0)
    F = model.transition()
    L = np.linalg.cholesky(model.process_noise() + 1e-12 * np.eye(4))
    runs, steps = 100, 500
    nees = np.zeros((runs, steps))
    for k in range(runs):
        rng = np.random.default_rng(k)
        obs = PlatformState((0.0, 0.0), 0.0, 0.0)
        x = np.array([2000.0, -500.0, *rng.normal(0.0, 5.0, 2)])

        def measure(o, x):
            d, b = sim.relative_polar(o, x[:2])
            return Measurement(d + 40.0 * rng.standard_normal(),
                               sim.wrap_angle(b + 0.005 * rng.standard_normal()), 0)

        t = tracker.initialize(measure(obs, x), obs, spec, 5.0)
        for i in range(steps):
            obs = sim.step_platform(obs, 2.0)
            x = F @ x + L @ rng.standard_normal(4)
            t = tracker.update(tracker.predict(t, model), measure(obs, x), obs, spec)
            e = x - t.mean
            nees[k, i] = e @ np.linalg.solve(t.covariance, e)
    avg = nees.mean(axis=0)
    lo, hi = chi2.ppf([0.025, 0.975], 4 * runs) / runs
    assert lo < avg.mean() < hi
    assert np.mean((avg > lo) & (avg < hi)) > 0.85
