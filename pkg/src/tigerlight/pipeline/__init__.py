"""Batch orchestration and reporting."""

from .commands import (
    DataError,
    cmd_compare,
    cmd_detect,
    cmd_enhance,
    cmd_eval,
    cmd_stats,
    run_pipeline,
)
from .config import ConfigError, RunConfig, build_run_config, load_run_config
from .report import ComparisonReport
