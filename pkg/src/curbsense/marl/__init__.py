from .net import AdamState, QNet, load_model, q_forward, save_model, sync_target
from .policies import (
    baseline_policy,
    generate_joint_action,
    joint_action_policy,
    simultaneous_actions,
)
from .training import ReplayBuffer, TrainConfig, TrainResult, td_targets, train, train_step

__all__ = [
    "AdamState",
    "QNet",
    "ReplayBuffer",
    "TrainConfig",
    "TrainResult",
    "baseline_policy",
    "generate_joint_action",
    "joint_action_policy",
    "load_model",
    "q_forward",
    "save_model",
    "simultaneous_actions",
    "sync_target",
    "td_targets",
    "train",
    "train_step",
]
