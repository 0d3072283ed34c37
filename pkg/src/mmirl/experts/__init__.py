from .demos import DemoConfig, PolicyExpert, generate_demos, rollout_expert
from .pi import DEFAULT_KC, DEFAULT_TAU_I, PiController, PiExpert, closed_loop, pi_control, step_metrics, tune_pi

__all__ = [
    "DEFAULT_KC",
    "DEFAULT_TAU_I",
    "DemoConfig",
    "PiController",
    "PiExpert",
    "PolicyExpert",
    "closed_loop",
    "generate_demos",
    "pi_control",
    "rollout_expert",
    "step_metrics",
    "tune_pi",
]
