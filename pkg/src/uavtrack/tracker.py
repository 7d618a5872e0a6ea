"""Extended Kalman filter over the target's global position and velocity.

State layout is ``(x, y, vx, vy)``.  Motion uses the discrete piecewise
constant white acceleration model; measurements are range and bearing taken
from the observer pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import FORWARD, Measurement, PlatformState, SensorSpec, polar_offset, relative_polar, wrap_angle

LOG_2PI_E = math.log(2.0 * math.pi * math.e)


class FilterDivergenceError(ArithmeticError):
    """Raised when the filter produces a non-finite or non-invertible quantity."""


@dataclass(frozen=True)
class Track:
    mean: np.ndarray
    covariance: np.ndarray
    initialized: bool = True

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]


@dataclass(frozen=True)
class DwpaModel:
    accel_std: float = 5.0
    step_time: float = 2.0

    def __post_init__(self):
        if self.accel_std <= 0.0 or self.step_time <= 0.0:
            raise ValueError("accel_std and step_time must be positive")

    def transition(self) -> np.ndarray:
        F = np.eye(4)
        F[0, 2] = F[1, 3] = self.step_time
        return F

    def process_noise(self) -> np.ndarray:
        dt = self.step_time
        q = self.accel_std**2
        Q = np.zeros((4, 4))
        for pos, vel in ((0, 2), (1, 3)):
            Q[pos, pos] = q * dt**4 / 4.0
            Q[pos, vel] = Q[vel, pos] = q * dt**3 / 2.0
            Q[vel, vel] = q * dt**2
        return Q


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def _check_finite(mean: np.ndarray, P: np.ndarray, what: str) -> None:
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(P))):
        raise FilterDivergenceError(f"non-finite track after {what}")


def predict(track: Track, model: DwpaModel) -> Track:
    if not track.initialized:
        raise ValueError("cannot predict an uninitialized track")
    F = model.transition()
    mean = F @ track.mean
    P = _symmetrize(F @ track.covariance @ F.T + model.process_noise())
    _check_finite(mean, P, "predict")
    return Track(mean, P)


def measurement_function(state, observer: PlatformState, convention: str = FORWARD) -> np.ndarray:
    """Predicted (range, bearing) of a state vector seen from ``observer``."""
    return np.array(relative_polar(observer, state[:2], convention))


def measurement_jacobian(state, observer: PlatformState, convention: str = FORWARD) -> np.ndarray:
    dx = state[0] - observer.position[0]
    dy = state[1] - observer.position[1]
    r2 = dx * dx + dy * dy
    if r2 == 0.0:
        raise FilterDivergenceError("track coincides with the observer")
    r = math.sqrt(r2)
    # both conventions share the range row; the bearing row flips sign
    sign = 1.0 if convention == FORWARD else -1.0
    H = np.zeros((2, 4))
    H[0, 0] = dx / r
    H[0, 1] = dy / r
    H[1, 0] = sign * dy / r2
    H[1, 1] = -sign * dx / r2
    return H


def update(track: Track, meas: Measurement, observer: PlatformState, spec: SensorSpec) -> Track:
    """EKF correction with a Joseph-form covariance update."""
    if not track.initialized:
        raise ValueError("cannot update an uninitialized track")
    x, P = track.mean, track.covariance
    H = measurement_jacobian(x, observer, spec.convention)
    z_pred = measurement_function(x, observer, spec.convention)
    innovation = np.array([meas.range - z_pred[0], wrap_angle(meas.bearing - z_pred[1])])
    R = np.diag([spec.sigma_range**2, spec.sigma_bearing**2])
    S = H @ P @ H.T + R
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError as exc:
        raise FilterDivergenceError("singular innovation covariance") from exc
    mean = x + K @ innovation
    I_KH = np.eye(4) - K @ H
    P_new = _symmetrize(I_KH @ P @ I_KH.T + K @ R @ K.T)
    _check_finite(mean, P_new, "update")
    return Track(mean, P_new)


def initialize(
    meas: Measurement, observer: PlatformState, spec: SensorSpec, init_vel_std: float = 30.0
) -> Track:
    """Start a track at the measured position with zero velocity.

    The position covariance is the measurement noise pushed through the
    linearized polar-to-Cartesian map.
    """
    angle = observer.heading + meas.bearing
    ox, oy = polar_offset(meas.range, angle, spec.convention)
    mean = np.array([observer.position[0] + ox, observer.position[1] + oy, 0.0, 0.0])
    # d(offset)/d(range, bearing)
    c, s = math.cos(angle), math.sin(angle)
    r = meas.range
    if spec.convention == FORWARD:
        J = np.array([[c, -r * s], [-s, -r * c]])
    else:
        J = np.array([[-c, r * s], [-s, -r * c]])
    R = np.diag([spec.sigma_range**2, spec.sigma_bearing**2])
    P = np.zeros((4, 4))
    P[:2, :2] = _symmetrize(J @ R @ J.T)
    P[2, 2] = P[3, 3] = init_vel_std**2
    return Track(mean, P)


def entropy(track_or_cov) -> float:
    """Differential entropy 0.5 * ln det(2 pi e P) in nats."""
    P = track_or_cov.covariance if isinstance(track_or_cov, Track) else np.asarray(track_or_cov)
    sign, logdet = np.linalg.slogdet(P)
    if sign <= 0 or not np.isfinite(logdet):
        raise ValueError("covariance is not positive definite")
    return 0.5 * (P.shape[0] * LOG_2PI_E + logdet)


def track_relative(track: Track, observer: PlatformState, convention: str = FORWARD) -> tuple[float, float]:
    """Distance and bearing of the track mean as seen from ``observer``."""
    if not track.initialized:
        raise ValueError("track not initialized")
    return relative_polar(observer, track.mean[:2], convention)
