"""Configuration, experiment runner, result tables, plots and the CLI."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .records import SCHEMAS, SchemaError, read_csv, write_csv
from .run import RunRecord, run

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "SCHEMAS",
    "SchemaError",
    "read_csv",
    "write_csv",
    "RunRecord",
    "run",
]
