"""Configuration, orchestration and the ``interlace-lab`` command."""
from .config import ConfigError, ExperimentConfig, parse_config, validate
from .runner import RunManifest, run
