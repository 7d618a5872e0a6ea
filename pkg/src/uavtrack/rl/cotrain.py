"""Simultaneous PPO training of the observer and the evading target.

Both agents act in the same episodes.  The observer learns from r_O, the
target from r_T = -r_O, and each gets its own PPO update every batch.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..config import EnvConfig
from ..env import OBSERVER_FEATURES, TARGET_FEATURES, env_step, make_observations, start_episode
from .checkpoint import save_checkpoint
from .nets import PolicyNetwork, make_actor, make_critic, sample_action
from .ppo import PpoConfig, PpoLearner, RolloutBuffer, TrainingDivergenceError, compute_gae, normalize_advantages

log = logging.getLogger(__name__)

CURVE_COLUMNS = (
    "batch", "env_steps", "episodes", "mean_return_observer", "mean_return_target",
    "obs_policy_loss", "obs_value_loss", "tgt_policy_loss", "tgt_value_loss",
    "obs_log_std", "tgt_log_std",
)


@dataclass
class CoTrainResult:
    observer_actor: PolicyNetwork
    observer_critic: PolicyNetwork
    target_actor: PolicyNetwork
    target_critic: PolicyNetwork
    curve: list = field(default_factory=list)
    checkpoints: dict = field(default_factory=dict)


@dataclass
class _Slot:
    """Rollout state of one environment that survives across batches."""

    rng: np.random.Generator
    world: object = None
    track: object = None
    obs_o: np.ndarray = None
    obs_t: np.ndarray = None
    ep_return: float = 0.0

    def new_episode(self, config):
        self.world, self.track = start_episode(int(self.rng.integers(2**63)), config)
        self.obs_o, self.obs_t = make_observations(self.world, self.track, config)
        self.ep_return = 0.0


def collect_rollout(nets, config: EnvConfig, n_steps: int, slot: _Slot):
    """Run ``n_steps`` joint steps.  Returns ``(buf_obs, buf_tgt, returns, slot)``.

    ``nets`` is ``(actor_o, critic_o, actor_t, critic_t)``.  Policies act on
    sampled actions; the environment clamps them.
    """
    actor_o, critic_o, actor_t, critic_t = nets
    rng = slot.rng
    buf_o, buf_t = RolloutBuffer(), RolloutBuffer()
    finished = []
    if slot.world is None:
        slot.new_episode(config)
    log_std_o = float(actor_o.log_std[0])
    log_std_t = float(actor_t.log_std[0])
    for _ in range(n_steps):
        obs_o, obs_t = slot.obs_o, slot.obs_t
        a_o, lp_o = sample_action(float(actor_o.forward(obs_o)[0]), log_std_o, rng)
        a_t, lp_t = sample_action(float(actor_t.forward(obs_t)[0]), log_std_t, rng)
        v_o = float(critic_o.forward(obs_o)[0])
        v_t = float(critic_t.forward(obs_t)[0])
        slot.world, slot.track, out = env_step(slot.world, slot.track, a_o, a_t, config)
        buf_o.add(obs_o, a_o, lp_o, out.reward_observer, v_o, out.terminated)
        buf_t.add(obs_t, a_t, lp_t, out.reward_target, v_t, out.terminated)
        slot.ep_return += out.reward_observer
        if out.terminated:
            finished.append(slot.ep_return)
            slot.new_episode(config)
        else:
            slot.obs_o, slot.obs_t = out.observer_obs, out.target_obs
    buf_o.last_value = float(critic_o.forward(slot.obs_o)[0])
    buf_t.last_value = float(critic_t.forward(slot.obs_t)[0])
    return buf_o, buf_t, finished, slot


def _prepare(buffers, cfg: PpoConfig) -> dict:
    parts = []
    for buf in buffers:
        arr = buf.arrays()
        adv, ret = compute_gae(arr["rewards"], arr["values"], arr["dones"], arr["last_value"],
                               cfg.gamma, cfg.gae_lambda)
        arr["advantages"], arr["returns"] = adv, ret
        parts.append(arr)
    keys = ("obs", "actions", "log_probs", "rewards", "advantages", "returns")
    batch = {k: np.concatenate([p[k] for p in parts]) for k in keys}
    batch["advantages"] = normalize_advantages(batch["advantages"])
    return batch


def _save_all(nets, out_dir, tag, env_hash):
    names = ("observer_actor", "observer_critic", "target_actor", "target_critic")
    paths = {}
    for name, net in zip(names, nets):
        path = os.path.join(out_dir, f"{name}{tag}.ckpt")
        save_checkpoint(net, path, env_hash=env_hash)
        paths[name] = path
    return paths


def cotrain(env_config: EnvConfig, ppo_config: PpoConfig, seed: int, out_dir=None,
            workers: int = 1, progress=None) -> CoTrainResult:
    """Co-train both agents for ``ppo_config.total_steps`` environment steps.

    With ``out_dir`` set, checkpoints are written every
    ``checkpoint_every`` batches (``*_latest.ckpt``) and at the end.  On
    divergence :class:`TrainingDivergenceError` is raised carrying
    ``last_checkpoint`` (a path or ``None``).
    """
    root = np.random.SeedSequence(seed)
    init_ss, update_ss, worker_ss = root.spawn(3)
    init_rng = np.random.default_rng(init_ss)
    update_rng = np.random.default_rng(update_ss)
    hidden = ppo_config.hidden

    nets = (
        make_actor(len(OBSERVER_FEATURES), hidden, init_rng),
        make_critic(len(OBSERVER_FEATURES), hidden, init_rng),
        make_actor(len(TARGET_FEATURES), hidden, init_rng),
        make_critic(len(TARGET_FEATURES), hidden, init_rng),
    )
    learners = (PpoLearner(nets[0], nets[1], ppo_config), PpoLearner(nets[2], nets[3], ppo_config))
    workers = max(1, int(workers))
    slots = [_Slot(np.random.default_rng(ss)) for ss in worker_ss.spawn(workers)]
    per_worker = [ppo_config.rollout_batch_steps // workers] * workers
    per_worker[0] += ppo_config.rollout_batch_steps - sum(per_worker)

    env_hash = env_config.digest()
    result = CoTrainResult(*nets)
    last_ckpt = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        env_steps = 0
        batch_idx = 0
        while env_steps < ppo_config.total_steps:
            if pool is None:
                outputs = [collect_rollout(nets, env_config, per_worker[0], slots[0])]
            else:
                futures = [pool.submit(collect_rollout, nets, env_config, n, s)
                           for n, s in zip(per_worker, slots)]
                outputs = [f.result() for f in futures]
            slots = [o[3] for o in outputs]
            finished = [r for o in outputs for r in o[2]]
            env_steps += ppo_config.rollout_batch_steps
            batch_idx += 1

            try:
                stats_o = learners[0].update(_prepare([o[0] for o in outputs], ppo_config), update_rng)
                stats_t = learners[1].update(_prepare([o[1] for o in outputs], ppo_config), update_rng)
            except TrainingDivergenceError as exc:
                exc.last_checkpoint = last_ckpt
                raise

            mean_ret = float(np.mean(finished)) if finished else math.nan
            row = {
                "batch": batch_idx,
                "env_steps": env_steps,
                "episodes": len(finished),
                "mean_return_observer": mean_ret,
                "mean_return_target": -mean_ret if finished else math.nan,
                "obs_policy_loss": stats_o["policy_loss"],
                "obs_value_loss": stats_o["value_loss"],
                "tgt_policy_loss": stats_t["policy_loss"],
                "tgt_value_loss": stats_t["value_loss"],
                "obs_log_std": float(nets[0].log_std[0]),
                "tgt_log_std": float(nets[2].log_std[0]),
            }
            result.curve.append(row)
            log.info("batch %d steps %d return %.2f", batch_idx, env_steps, mean_ret)
            if progress is not None:
                progress(row)
            if out_dir is not None and batch_idx % ppo_config.checkpoint_every == 0:
                result.checkpoints = _save_all(nets, out_dir, "_latest", env_hash)
                last_ckpt = result.checkpoints["observer_actor"]
    finally:
        if pool is not None:
            pool.shutdown()

    if out_dir is not None:
        result.checkpoints = _save_all(nets, out_dir, "", env_hash)
    return result


def write_curve_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for row in curve:
            writer.writerow([repr(float(row[c])) if isinstance(row[c], float) else row[c] for c in CURVE_COLUMNS])
