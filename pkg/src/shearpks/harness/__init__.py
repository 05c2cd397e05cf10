"""Configuration, experiment orchestration, persistence and reports."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config, serialize_config
from .snapshot import SnapshotError, read_snapshot, write_snapshot

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SnapshotError",
    "load_config",
    "parse_config",
    "read_snapshot",
    "serialize_config",
    "write_snapshot",
]
