"""Environment parameterization and config-file loading."""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, fields

from .sim import CONVENTIONS, FORWARD, InitSpec, SensorSpec
from .tracker import DwpaModel

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    """All environment parameters.  Defaults are the evaluation setup.

    Rotational limits are in rad/s (heading advances by ``omega / tau`` per
    step), ``t_max`` in seconds and ``tau`` in Hz.
    """

    alpha: float = 1.4
    sigma_d: float = 40.0
    sigma_theta: float = 0.005
    k: float = 1.05
    s_max: float = 50.0
    d_max: float = 5000.0
    t_max: float = 1200.0
    tau: float = 0.5
    gamma: float = 0.99
    omega_obs_min: float = -0.25
    omega_obs_max: float = 0.25
    omega_tgt_min: float = -0.75
    omega_tgt_max: float = 0.75
    v_obs: float = 50.0
    v_tgt: float = 20.0
    k_obs: float = 1.0
    k_tgt: float = 0.2
    accel_std: float = 5.0
    init_vel_std: float = 30.0
    r_init_min: float = 500.0
    r_init_max: float = 2000.0
    bearing_convention: str = FORWARD

    def __post_init__(self):
        problems = []
        if self.k <= 1.0:
            problems.append("k must exceed 1")
        if self.s_max <= 0.0:
            problems.append("s_max must be positive")
        if self.d_max <= 0.0:
            problems.append("d_max must be positive")
        if self.tau <= 0.0 or self.t_max <= 0.0:
            problems.append("tau and t_max must be positive")
        if not 0.0 < self.gamma <= 1.0:
            problems.append("gamma must lie in (0, 1]")
        if self.omega_obs_min >= self.omega_obs_max:
            problems.append("omega_obs_min must be below omega_obs_max")
        if self.omega_tgt_min >= self.omega_tgt_max:
            problems.append("omega_tgt_min must be below omega_tgt_max")
        if not 0.0 < self.alpha <= 2.0 * math.pi:
            problems.append("alpha must lie in (0, 2pi]")
        if self.r_init_max >= self.d_max:
            problems.append("r_init_max must be below d_max")
        if self.bearing_convention not in CONVENTIONS:
            problems.append(f"bearing_convention must be one of {CONVENTIONS}")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def step_time(self) -> float:
        return 1.0 / self.tau

    @property
    def max_steps(self) -> int:
        return int(round(self.t_max * self.tau))

    def sensor(self) -> SensorSpec:
        return SensorSpec(self.alpha, self.sigma_d, self.sigma_theta, self.bearing_convention)

    def dwpa(self) -> DwpaModel:
        return DwpaModel(self.accel_std, self.step_time)

    def init_spec(self) -> InitSpec:
        return InitSpec(
            observer_speed=self.v_obs,
            target_speed=self.v_tgt,
            r_init_min=self.r_init_min,
            r_init_max=self.r_init_max,
            fov_opening=self.alpha,
            d_max=self.d_max,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Stable content hash, recorded in checkpoints and manifests."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def env_config_from_dict(data: dict, **overrides) -> EnvConfig:
    known = {f.name for f in fields(EnvConfig)}
    merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = sorted(set(merged) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return EnvConfig(**merged)


def load_config(path) -> dict:
    """Read a TOML config file.

    The ``[env]`` table (or the top level, if absent) holds
    :class:`EnvConfig` fields; an optional ``[ppo]`` table is returned
    untouched for the trainer.
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    ppo = data.pop("ppo", {})
    env = data.pop("env", data)
    return {"env": env, "ppo": ppo}
