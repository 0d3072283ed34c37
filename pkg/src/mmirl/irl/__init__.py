from .airl import MultiTaskAIRL, TrainingDiverged, sample_categorical
from .networks import (
    ContextPrior,
    Discriminator,
    InferenceNet,
    binary_class_loss,
    categorical_entropy,
    discriminator_prob,
    info_objective,
    info_terms,
    irl_reward_from_prob,
    unit_actions,
)
from .tabular import TabularMDP, four_state_mdp, hard_value_iteration, occupancy, soft_value_iteration, tabular_airl

__all__ = [
    "ContextPrior",
    "Discriminator",
    "InferenceNet",
    "MultiTaskAIRL",
    "TabularMDP",
    "TrainingDiverged",
    "binary_class_loss",
    "categorical_entropy",
    "discriminator_prob",
    "four_state_mdp",
    "hard_value_iteration",
    "info_objective",
    "info_terms",
    "irl_reward_from_prob",
    "occupancy",
    "sample_categorical",
    "soft_value_iteration",
    "tabular_airl",
    "unit_actions",
]
