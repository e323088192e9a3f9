"""Configuration management for fouriereg."""

from .settings import (
    DataConfig,
    LoggingConfig,
    NetVariant,
    Settings,
    TrainConfig,
)
from .validators import generate_sample_config, validate_config_file

__all__ = [
    "Settings",
    "NetVariant",
    "TrainConfig",
    "DataConfig",
    "LoggingConfig",
    "validate_config_file",
    "generate_sample_config",
]
