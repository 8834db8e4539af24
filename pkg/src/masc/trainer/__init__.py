"""Training procedures: MAR pretraining, PPO / joint training, and DQN baselines."""
from .dqn import DQNConfig, ReplayBuffer, dqn_train, td_targets
from .masc import MascConfig, MascResult, finetune_mar_pass, log_csv_text, masc_train
from .ppo import PPOConfig, RolloutBuffer, UpdateStats, compute_gae, normalize_advantages, ppo_losses, ppo_update
from .pretrain import PretrainConfig, PretrainResult, mean_l1, pretrain_mar

__all__ = [
    "DQNConfig", "ReplayBuffer", "dqn_train", "td_targets",
    "MascConfig", "MascResult", "finetune_mar_pass", "log_csv_text", "masc_train",
    "PPOConfig", "RolloutBuffer", "UpdateStats", "compute_gae", "normalize_advantages", "ppo_losses", "ppo_update",
    "PretrainConfig", "PretrainResult", "mean_l1", "pretrain_mar",
]
