from .gae import gae
from .policy import GaussianPolicy, augment, one_hot
from .ppo import ForwardRL, PolicyAgent, compute_advantages, maxent_return, policy_update, train_forward_rl
from .rollout import RolloutBatch, collect_rollouts, select_episodes

__all__ = [
    "ForwardRL",
    "GaussianPolicy",
    "PolicyAgent",
    "RolloutBatch",
    "augment",
    "collect_rollouts",
    "compute_advantages",
    "gae",
    "maxent_return",
    "one_hot",
    "policy_update",
    "select_episodes",
    "train_forward_rl",
]
