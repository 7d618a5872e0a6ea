"""Two-agent tracking POMDP built from the simulator and the tracker.

Both agents act simultaneously on the same snapshot.  The observer is
rewarded for low track entropy; the target receives the negated reward.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from . import sim, tracker
from .config import EnvConfig
from .tracker import FilterDivergenceError, Track

OBSERVER_FEATURES = ("omega", "kappa", "track_dist", "sin_track_bearing", "cos_track_bearing", "entropy")
TARGET_FEATURES = ("omega", "true_dist", "sin_observer_bearing", "cos_observer_bearing")


class Termination(str, enum.Enum):
    NONE = "none"
    TIME_LIMIT = "time_limit"
    TRUE_RANGE = "true_range"
    EST_RANGE = "est_range"


@dataclass
class StepOutcome:
    observer_obs: np.ndarray
    target_obs: np.ndarray
    reward_observer: float
    reward_target: float
    terminated: bool
    termination_cause: Termination
    measurement: sim.Measurement | None = None
    entropy: float = float("nan")
    kappa: float = 1.0


def decay(steps_since_measurement: int, k: float) -> float:
    return k ** (-steps_since_measurement)


def decay_inverse(kappa: float, k: float) -> float:
    """Steps since measurement that produce ``kappa``."""
    return -math.log(kappa) / math.log(k)


def scale_action(a: float, omega_min: float, omega_max: float) -> float:
    a = min(1.0, max(-1.0, a))
    return 0.5 * (omega_max - omega_min) * (a + 1.0) + omega_min


def clamp_entropy(entropy: float, s_max: float) -> float:
    return min(s_max, max(-s_max, entropy))


def rewards(entropy: float, s_max: float) -> tuple[float, float]:
    r_obs = 1.0 - clamp_entropy(entropy, s_max) / s_max
    return r_obs, -r_obs


def make_observations(
    world: sim.WorldState, track: Track, config: EnvConfig, entropy: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized observer (6,) and target (4,) observation vectors."""
    if track is None or not track.initialized:
        raise ValueError("observations need an initialized track")
    conv = config.bearing_convention
    if entropy is None:
        entropy = tracker.entropy(track)
    d_est, th_est = tracker.track_relative(track, world.observer, conv)
    obs_o = np.array([
        world.observer.rot_speed / config.omega_obs_max,
        decay(world.steps_since_measurement, config.k),
        min(d_est / config.d_max, 1.0),
        math.sin(th_est),
        math.cos(th_est),
        clamp_entropy(entropy, config.s_max) / config.s_max,
    ])
    d_true, th_obs = sim.relative_polar(world.target, world.observer.position, conv)
    obs_t = np.array([
        world.target.rot_speed / config.omega_tgt_max,
        min(d_true / config.d_max, 1.0),
        math.sin(th_obs),
        math.cos(th_obs),
    ])
    return obs_o, obs_t


def check_termination(world: sim.WorldState, track: Track, config: EnvConfig) -> Termination:
    if world.step >= config.max_steps:
        return Termination.TIME_LIMIT
    conv = config.bearing_convention
    if sim.relative_polar(world.observer, world.target.position, conv)[0] > config.d_max:
        return Termination.TRUE_RANGE
    if tracker.track_relative(track, world.observer, conv)[0] > config.d_max:
        return Termination.EST_RANGE
    return Termination.NONE


def env_step(world: sim.WorldState, track: Track, a_obs: float, a_tgt: float, config: EnvConfig):
    """Advance one step.  Returns ``(world, track, StepOutcome)``.

    ``world.rng`` is shared with the returned world and advanced by the
    sensor draw.
    """
    dt = config.step_time
    w_obs = scale_action(float(a_obs), config.omega_obs_min, config.omega_obs_max)
    w_tgt = scale_action(float(a_tgt), config.omega_tgt_min, config.omega_tgt_max)
    observer = sim.step_platform(replace(world.observer, rot_speed=w_obs), dt)
    target = sim.step_platform(replace(world.target, rot_speed=w_tgt), dt)
    new_world = sim.WorldState(
        observer=observer,
        target=target,
        step=world.step + 1,
        steps_since_measurement=world.steps_since_measurement,
        rng=world.rng,
    )
    sensor = config.sensor()
    meas = sim.sense(new_world, sensor)

    diverged = False
    try:
        new_track = tracker.predict(track, config.dwpa())
        if meas is not None:
            new_track = tracker.update(new_track, meas, observer, sensor)
        s = tracker.entropy(new_track)
    except (FilterDivergenceError, ValueError):
        diverged = True
        new_track = track
        s = tracker.entropy(track)

    obs_o, obs_t = make_observations(new_world, new_track, config, entropy=s)
    r_obs, r_tgt = rewards(s, config.s_max)
    cause = Termination.EST_RANGE if diverged else check_termination(new_world, new_track, config)
    outcome = StepOutcome(
        observer_obs=obs_o,
        target_obs=obs_t,
        reward_observer=r_obs,
        reward_target=r_tgt,
        terminated=cause is not Termination.NONE,
        termination_cause=cause,
        measurement=meas,
        entropy=s,
        kappa=float(obs_o[1]),
    )
    return new_world, new_track, outcome


def start_episode(seed, config: EnvConfig) -> tuple[sim.WorldState, Track]:
    """Reset the world and initialize the track from the first detection."""
    world = sim.reset(seed, config.init_spec(), config.bearing_convention)
    meas = sim.sense(world, config.sensor())
    if meas is None:
        # unreachable with the default init spec; kept for custom conventions
        raise RuntimeError("initial target outside the field of view")
    track = tracker.initialize(meas, world.observer, config.sensor(), config.init_vel_std)
    return world, track


TRACE_COLUMNS = (
    "step",
    *(f"o_{name}" for name in OBSERVER_FEATURES),
    "a_obs", "a_tgt",
    "obs_x", "obs_y", "obs_heading", "obs_omega",
    "tgt_x", "tgt_y", "tgt_heading", "tgt_omega",
    "meas_range", "meas_bearing",
    "track_x", "track_y", "track_vx", "track_vy",
    "p_xx", "p_yy", "p_vxvx", "p_vyvy",
    "entropy", "kappa", "r_obs", "r_tgt", "terminated", "cause",
)


class TrackingEnv:
    """Stateful wrapper with a reset/step interface.

    With ``record=True`` every step appends a row to :attr:`trace`.  Row
    ``t`` holds the observer observation the actions were chosen on, the
    actions, and the resulting post-step state.
    """

    def __init__(self, config: EnvConfig | None = None, record: bool = False):
        self.config = config or EnvConfig()
        self.record = record
        self.world: sim.WorldState | None = None
        self.track: Track | None = None
        self.trace: list[dict] = []
        self.done = True

    def reset(self, seed=None) -> tuple[np.ndarray, np.ndarray]:
        self.world, self.track = start_episode(seed, self.config)
        self.trace = []
        self.done = False
        self._obs = make_observations(self.world, self.track, self.config)
        return self._obs

    def step(self, a_obs: float, a_tgt: float) -> StepOutcome:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        prev_obs = self._obs[0]
        self.world, self.track, out = env_step(self.world, self.track, a_obs, a_tgt, self.config)
        self._obs = (out.observer_obs, out.target_obs)
        self.done = out.terminated
        if self.record:
            self.trace.append(self._row(prev_obs, a_obs, a_tgt, out))
        return out

    def _row(self, prev_obs, a_obs, a_tgt, out: StepOutcome) -> dict:
        w, t = self.world, self.track
        row = {"step": w.step}
        row.update({f"o_{n}": float(v) for n, v in zip(OBSERVER_FEATURES, prev_obs)})
        meas = out.measurement
        row.update(
            a_obs=float(a_obs), a_tgt=float(a_tgt),
            obs_x=w.observer.position[0], obs_y=w.observer.position[1],
            obs_heading=w.observer.heading, obs_omega=w.observer.rot_speed,
            tgt_x=w.target.position[0], tgt_y=w.target.position[1],
            tgt_heading=w.target.heading, tgt_omega=w.target.rot_speed,
            meas_range=meas.range if meas else "", meas_bearing=meas.bearing if meas else "",
            track_x=float(t.mean[0]), track_y=float(t.mean[1]),
            track_vx=float(t.mean[2]), track_vy=float(t.mean[3]),
            p_xx=float(t.covariance[0, 0]), p_yy=float(t.covariance[1, 1]),
            p_vxvx=float(t.covariance[2, 2]), p_vyvy=float(t.covariance[3, 3]),
            entropy=out.entropy, kappa=out.kappa,
            r_obs=out.reward_observer, r_tgt=out.reward_target,
            terminated=int(out.terminated), cause=out.termination_cause.value,
        )
        return row


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_trace_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in TRACE_COLUMNS])


def read_trace_csv(path) -> list[dict]:
    """Read a trace back; numeric columns become floats, blanks become None."""
    rows = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for key, val in raw.items():
                if key == "cause":
                    row[key] = val
                elif val == "":
                    row[key] = None
                else:
                    row[key] = float(val)
            rows.append(row)
    return rows
