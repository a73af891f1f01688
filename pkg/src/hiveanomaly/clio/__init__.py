"""File formats, checkpoints, run configuration and the command-line interface."""

from .checkpoint import CheckpointError, load, save
from .config import ConfigError, RunConfig, load_config
from .io import (FormatError, downsample_to_minutes, ingest, ingest_subminute, read_labels, write_labels,
                 write_trace)

__all__ = ["CheckpointError", "ConfigError", "FormatError", "RunConfig", "downsample_to_minutes", "ingest",
           "ingest_subminute", "load", "load_config", "read_labels", "save", "write_labels", "write_trace"]
