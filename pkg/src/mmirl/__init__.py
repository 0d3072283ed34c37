"""Multi-mode process controllers learned from demonstrations by
context-conditional adversarial inverse reinforcement learning."""

__version__ = "0.1.0"
