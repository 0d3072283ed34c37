from .autodiff import AutodiffError, Var, backward
from .nn import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    GaussianHead,
    Mlp,
    ParamBlock,
    clamp_log_std,
    gaussian_entropy,
    gaussian_log_prob,
    mlp_shapes,
)
from .optim import Adam, AdamState, adam_step, clip_grad_norm

__all__ = [
    "Adam",
    "AdamState",
    "AutodiffError",
    "GaussianHead",
    "LOG_STD_MAX",
    "LOG_STD_MIN",
    "Mlp",
    "ParamBlock",
    "Var",
    "adam_step",
    "backward",
    "clamp_log_std",
    "clip_grad_norm",
    "gaussian_entropy",
    "gaussian_log_prob",
    "mlp_shapes",
]
