"""Cross-policy evaluation: matchups, single-target OSPA and return matrices."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import OBSERVER, TARGET, PController, RandomPolicy
from .config import EnvConfig
from .env import OBSERVER_FEATURES, TARGET_FEATURES, TrackingEnv
from .rl.checkpoint import load_checkpoint
from .rl.nets import PolicyNetwork

STATIC_IDS = ("random", "pctrl")


class PolicyResolutionError(ValueError):
    pass


class ActorPolicy:
    """Learned policy acting on its observation vector.

    Evaluation is deterministic by default (the Gaussian mean).
    """

    def __init__(self, net: PolicyNetwork, role: str, policy_id="checkpoint", deterministic=True):
        expected = len(OBSERVER_FEATURES) if role == OBSERVER else len(TARGET_FEATURES)
        if net.sizes[0] != expected:
            raise PolicyResolutionError(
                f"{role} policy needs {expected} inputs, checkpoint has {net.sizes[0]}"
            )
        self.net = net
        self.role = role
        self.policy_id = policy_id
        self.deterministic = deterministic

    def act(self, obs, world, rng) -> float:
        mean = float(self.net.forward(obs)[0])
        if self.deterministic:
            return mean
        return mean + math.exp(float(self.net.log_std[0])) * rng.standard_normal()


def resolve_policy(spec: str, role: str, config: EnvConfig):
    """Build a policy from ``random``, ``pctrl`` or ``checkpoint:<path>``."""
    if spec == "random":
        return RandomPolicy(role)
    if spec == "pctrl":
        gain = config.k_obs if role == OBSERVER else config.k_tgt
        return PController(role, gain, config.bearing_convention)
    if spec.startswith("checkpoint:"):
        path = spec.split(":", 1)[1]
        net = load_checkpoint(path, env_hash=config.digest())
        return ActorPolicy(net, role, policy_id=spec)
    raise PolicyResolutionError(f"unknown policy id {spec!r}; use random, pctrl or checkpoint:<path>")


def is_static(policy) -> bool:
    return getattr(policy, "policy_id", None) in STATIC_IDS


def ospa_episode(errors, max_steps: int, cutoff: float = 500.0) -> float:
    """Single-target OSPA of one episode.

    ``errors`` are the per-step position errors of the steps that ran; the
    steps after early termination count as a dropped track at the cutoff.
    """
    errors = np.asarray(errors, dtype=float)
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    if errors.size > max_steps:
        raise ValueError(f"trace has {errors.size} steps, more than max_steps={max_steps}")
    total = float(np.minimum(errors, cutoff).sum()) + (max_steps - errors.size) * cutoff
    return total / max_steps


@dataclass
class MatchupResult:
    observer_id: str
    target_id: str
    returns: list = field(default_factory=list)
    ospa: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    causes: list = field(default_factory=list)
    seeds: list = field(default_factory=list)

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))

    @property
    def mean_ospa(self) -> float:
        return float(np.mean(self.ospa))


def episode_seeds(seed: int, index: int) -> tuple[int, np.random.Generator, np.random.Generator]:
    """Environment seed and the two policy generators of one episode.

    Depends only on ``(seed, index)`` so every matchup cell sees the same
    initial conditions.
    """
    env_ss, obs_ss, tgt_ss = np.random.SeedSequence([seed, index]).spawn(3)
    return (
        int(env_ss.generate_state(1, np.uint64)[0]),
        np.random.default_rng(obs_ss),
        np.random.default_rng(tgt_ss),
    )


def run_episode(observer_policy, target_policy, env_seed, obs_rng, tgt_rng, config, record=False):
    env = TrackingEnv(config, record=record)
    obs_o, obs_t = env.reset(env_seed)
    ret = 0.0
    errors = []
    out = None
    while not env.done:
        a_o = observer_policy.act(obs_o, env.world, obs_rng)
        a_t = target_policy.act(obs_t, env.world, tgt_rng)
        out = env.step(a_o, a_t)
        ret += out.reward_observer
        errors.append(math.dist(env.world.target.position, env.track.mean[:2]))
        obs_o, obs_t = out.observer_obs, out.target_obs
    return ret, errors, out.termination_cause.value, env


def run_matchup(observer_policy, target_policy, n_episodes: int, seed: int,
                config: EnvConfig | None = None, cutoff: float = 500.0) -> MatchupResult:
    config = config or EnvConfig()
    result = MatchupResult(
        getattr(observer_policy, "policy_id", "?"), getattr(target_policy, "policy_id", "?")
    )
    for i in range(n_episodes):
        env_seed, obs_rng, tgt_rng = episode_seeds(seed, i)
        ret, errors, cause, _ = run_episode(observer_policy, target_policy, env_seed, obs_rng, tgt_rng, config)
        result.returns.append(ret)
        result.ospa.append(ospa_episode(errors, config.max_steps, cutoff))
        result.lengths.append(len(errors))
        result.causes.append(cause)
        result.seeds.append(env_seed)
    return result


def write_matchup_csv(result: MatchupResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "seed", "observer", "target", "return", "ospa", "length", "cause"])
        for i, row in enumerate(zip(result.seeds, result.returns, result.ospa, result.lengths, result.causes)):
            seed, ret, ospa, length, cause = row
            writer.writerow([i, seed, result.observer_id, result.target_id, repr(float(ret)), repr(float(ospa)),
                             length, cause])


@dataclass
class CellSummary:
    observer: str
    target: str
    n_runs: int
    n_episodes: int
    mean_return: float
    run_2sigma: float
    episode_2sigma: float
    mean_ospa: float
    ospa_run_2sigma: float


def matrix_report(observers: dict, targets: dict, n_episodes: int, seed: int,
                  config: EnvConfig | None = None, cutoff: float = 500.0) -> list[CellSummary]:
    """Return and OSPA statistics for every observer x target cell.

    ``observers`` and ``targets`` map a column/row label to a list of policy
    instances: one for a static baseline, one per independently retrained
    model otherwise.  Two learned sides are paired run by run; a static side
    is reused for every run.  ``run_2sigma`` is the spread of the per-run
    means (exactly 0 for static x static), ``episode_2sigma`` the within-run
    spread over episodes averaged across runs.
    """
    config = config or EnvConfig()
    cells = []
    for t_label, t_pols in targets.items():
        for o_label, o_pols in observers.items():
            n_runs = max(len(o_pols), len(t_pols))
            run_means, run_stds, ospa_means = [], [], []
            for r in range(n_runs):
                o = o_pols[r % len(o_pols)]
                t = t_pols[r % len(t_pols)]
                res = run_matchup(o, t, n_episodes, seed, config, cutoff)
                run_means.append(res.mean_return)
                run_stds.append(float(np.std(res.returns)))
                ospa_means.append(res.mean_ospa)
            cells.append(CellSummary(
                observer=o_label,
                target=t_label,
                n_runs=n_runs,
                n_episodes=n_episodes,
                mean_return=float(np.mean(run_means)),
                run_2sigma=2.0 * float(np.std(run_means)),
                episode_2sigma=2.0 * float(np.mean(run_stds)),
                mean_ospa=float(np.mean(ospa_means)),
                ospa_run_2sigma=2.0 * float(np.std(ospa_means)),
            ))
    return cells


def cell(cells, observer, target) -> CellSummary:
    for c in cells:
        if c.observer == observer and c.target == target:
            return c
    raise KeyError((observer, target))


def write_report_csv(cells, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["target", "observer", "n_runs", "n_episodes", "mean_return",
                         "run_2sigma", "episode_2sigma", "mean_ospa", "ospa_run_2sigma"])
        for c in cells:
            stats = (c.mean_return, c.run_2sigma, c.episode_2sigma, c.mean_ospa, c.ospa_run_2sigma)
            writer.writerow([c.target, c.observer, c.n_runs, c.n_episodes, *(repr(float(v)) for v in stats)])


def render_table(cells, value="return") -> str:
    """Aligned text table with targets as rows and observers as columns."""
    observers = list(dict.fromkeys(c.observer for c in cells))
    targets = list(dict.fromkeys(c.target for c in cells))

    def fmt(c):
        if value == "return":
            return f"{c.mean_return:.2f} ± {c.run_2sigma:.1f}"
        if value == "episode":
            return f"± {c.episode_2sigma:.1f}"
        return f"{c.mean_ospa:.0f} ± {c.ospa_run_2sigma:.0f}"

    grid = [["target \\ observer", *observers]]
    for t in targets:
        grid.append([t, *(fmt(cell(cells, o, t)) for o in observers)])
    widths = [max(len(row[i]) for row in grid) for i in range(len(grid[0]))]
    lines = [" | ".join(v.ljust(w) for v, w in zip(row, widths)) for row in grid]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    n_runs = max(c.n_runs for c in cells)
    lines.append(f"({cells[0].n_episodes} episodes per run, up to {n_runs} runs per cell)")
    return "\n".join(lines)


def select_median(pairs, n_episodes: int, seed: int, config: EnvConfig | None = None) -> int:
    """Index of the (observer, target) pair whose self-play return is the median."""
    returns = [run_matchup(o, t, n_episodes, seed, config).mean_return for o, t in pairs]
    order = np.argsort(returns, kind="stable")
    return int(order[(len(order) - 1) // 2])
