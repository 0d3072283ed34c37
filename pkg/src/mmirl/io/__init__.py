from .checkpoint import (
    CheckpointError,
    check_shapes,
    config_hash,
    load_checkpoint,
    load_estimator,
    save_checkpoint,
    save_estimator,
)
from .config import ConfigError, RunConfig, default_config, make_env, parse_config, write_effective_config
from .dataset import (
    DatasetError,
    DemoDataset,
    Sidecar,
    Trajectory,
    TrajectoryRecord,
    load_training_demos,
    read_dataset,
    write_dataset,
)
from .metrics import MetricsWriter, read_metrics

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "DemoDataset",
    "MetricsWriter",
    "RunConfig",
    "Sidecar",
    "Trajectory",
    "TrajectoryRecord",
    "check_shapes",
    "config_hash",
    "default_config",
    "load_checkpoint",
    "load_estimator",
    "load_training_demos",
    "make_env",
    "parse_config",
    "read_dataset",
    "read_metrics",
    "save_checkpoint",
    "save_estimator",
    "write_dataset",
    "write_effective_config",
]
