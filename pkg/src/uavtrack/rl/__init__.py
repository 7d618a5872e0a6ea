"""Actor-critic networks, PPO and the two-agent co-training loop."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cotrain import CoTrainResult, cotrain, write_curve_csv
from .nets import Adam, PolicyNetwork, forward_actor, make_actor, make_critic, sample_action
from .ppo import (
    PpoConfig,
    PpoLearner,
    RolloutBuffer,
    TrainingDivergenceError,
    compute_gae,
    normalize_advantages,
    ppo_loss_and_grads,
    ppo_update,
)

__all__ = [
    "Adam", "CheckpointError", "CoTrainResult", "PolicyNetwork", "PpoConfig", "PpoLearner",
    "RolloutBuffer", "TrainingDivergenceError", "compute_gae", "cotrain", "forward_actor",
    "load_checkpoint", "make_actor", "make_critic", "normalize_advantages", "ppo_loss_and_grads",
    "ppo_update", "sample_action", "save_checkpoint", "write_curve_csv",
]
