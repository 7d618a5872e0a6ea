"""PPO with the clipped surrogate objective and GAE."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .nets import Adam, PolicyNetwork, gaussian_log_prob, grad_views


class TrainingDivergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    learning_rate: float = 3e-4
    epochs_per_batch: int = 10
    minibatch_size: int = 128
    rollout_batch_steps: int = 4000
    value_coeff: float = 0.5
    entropy_coeff: float = 0.0
    grad_clip: float = 0.5
    total_steps: int = 800_000
    hidden: tuple = (64, 64)
    checkpoint_every: int = 10

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.clip_ratio <= 0.0:
            raise ValueError("clip_ratio must be positive")
        if self.minibatch_size <= 0 or self.rollout_batch_steps <= 0 or self.epochs_per_batch <= 0:
            raise ValueError("batch sizes and epochs must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "PpoConfig":
        known = {f.name for f in fields(cls)}
        merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ValueError(f"unknown ppo keys: {', '.join(unknown)}")
        return cls(**merged)


class RolloutBuffer:
    """Per-agent experience of one batch.

    ``last_value`` bootstraps the final step when the batch ends mid-episode.
    """

    def __init__(self):
        self.obs, self.actions, self.log_probs = [], [], []
        self.rewards, self.values, self.dones = [], [], []
        self.last_value = 0.0

    def add(self, obs, action, log_prob, reward, value, done):
        self.obs.append(obs)
        self.actions.append(action)
        self.log_probs.append(log_prob)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(done)

    def __len__(self):
        return len(self.rewards)

    def arrays(self) -> dict:
        return {
            "obs": np.asarray(self.obs, dtype=float),
            "actions": np.asarray(self.actions, dtype=float),
            "log_probs": np.asarray(self.log_probs, dtype=float),
            "rewards": np.asarray(self.rewards, dtype=float),
            "values": np.asarray(self.values, dtype=float),
            "dones": np.asarray(self.dones, dtype=float),
            "last_value": float(self.last_value),
        }


def compute_gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates and returns (not normalized).

    ``dones[t]`` marks that step ``t`` ended its episode; nothing flows
    backwards across it.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    n = rewards.size
    if n == 0:
        raise ValueError("empty buffer")
    if values.size != n or dones.size != n:
        raise ValueError("rewards, values and dones must have equal length")
    adv = np.zeros(n)
    running = 0.0
    next_value = float(last_value)
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    std = adv.std()
    return (adv - adv.mean()) / (std + 1e-8)


def ppo_loss_and_grads(actor: PolicyNetwork, critic: PolicyNetwork, obs, actions, old_log_probs,
                       advantages, returns, cfg: PpoConfig):
    """Total PPO loss of one minibatch with analytic gradients.

    loss = -mean(min(rho A, clip(rho) A)) + c_v mean((V - R)^2) - c_e H
    """
    n = obs.shape[0]
    mean, a_cache = actor.forward_cache(obs)
    mean = mean[:, 0]
    log_std = actor.log_std[0]
    log_p = gaussian_log_prob(actions, mean, log_std)
    ratio = np.exp(log_p - old_log_probs)
    eps = cfg.clip_ratio
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    surrogate = np.minimum(unclipped, clipped)
    entropy = log_std + 0.5 * math.log(2.0 * math.pi * math.e)

    # the unclipped branch is active unless clipping lowers the objective
    active = unclipped <= clipped
    d_logp = np.where(active, -ratio * advantages / n, 0.0)
    inv_var = math.exp(-2.0 * log_std)
    z2 = (actions - mean) ** 2 * inv_var
    d_mean = d_logp * (actions - mean) * inv_var
    g_actor, _ = actor.backward(a_cache, d_mean[:, None])
    grad_views(actor, g_actor).log_std[0] = np.sum(d_logp * (z2 - 1.0)) - cfg.entropy_coeff

    values, c_cache = critic.forward_cache(obs)
    values = values[:, 0]
    err = values - returns
    value_loss = np.mean(err * err)
    g_critic, _ = critic.backward(c_cache, (cfg.value_coeff * 2.0 * err / n)[:, None])

    policy_loss = -np.mean(surrogate)
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "approx_kl": float(np.mean(old_log_probs - log_p)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "loss": float(policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * entropy),
    }
    return stats, g_actor, g_critic


def clip_global_norm(grads, max_norm):
    total = math.sqrt(sum(float(g @ g) for g in grads))
    if max_norm is not None and max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * scale for g in grads]
    return grads, total


class PpoLearner:
    """One agent's actor, critic and their optimizers."""

    def __init__(self, actor: PolicyNetwork, critic: PolicyNetwork, cfg: PpoConfig):
        self.actor, self.critic, self.cfg = actor, critic, cfg
        self.actor_opt = Adam(actor.n_params, cfg.learning_rate)
        self.critic_opt = Adam(critic.n_params, cfg.learning_rate)

    def update(self, batch: dict, rng: np.random.Generator) -> dict:
        return ppo_update(self, batch, rng)


def ppo_update(learner: PpoLearner, batch: dict, rng: np.random.Generator) -> dict:
    """Several epochs of minibatch descent on one batch.

    ``batch`` needs obs, actions, log_probs, advantages (already normalized)
    and returns.  Raises :class:`TrainingDivergenceError` and leaves the
    networks untouched if a loss or gradient turns non-finite.
    """
    cfg = learner.cfg
    actor, critic = learner.actor, learner.critic
    backup = (actor.params.copy(), critic.params.copy())
    n = batch["obs"].shape[0]
    history = []
    for _ in range(cfg.epochs_per_batch):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = order[start:start + cfg.minibatch_size]
            stats, g_a, g_c = ppo_loss_and_grads(
                actor, critic, batch["obs"][idx], batch["actions"][idx], batch["log_probs"][idx],
                batch["advantages"][idx], batch["returns"][idx], cfg,
            )
            (g_a, g_c), norm = clip_global_norm([g_a, g_c], cfg.grad_clip)
            if not (math.isfinite(stats["loss"]) and math.isfinite(norm)):
                actor.params[:] = backup[0]
                critic.params[:] = backup[1]
                raise TrainingDivergenceError(f"non-finite PPO loss: {stats}")
            learner.actor_opt.step(actor.params, g_a)
            learner.critic_opt.step(critic.params, g_c)
            stats["grad_norm"] = norm
            history.append(stats)
    return {key: float(np.mean([h[key] for h in history])) for key in history[0]}
