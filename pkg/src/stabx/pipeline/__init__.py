"""Pipeline orchestration: config -> perturb -> interpret -> score -> report."""

from .config import ConfigError, PipelineConfig, load_config
from .run import run_pipeline
from .score import score_run
from .report import build_report

__all__ = [
    "ConfigError",
    "PipelineConfig",
    "load_config",
    "run_pipeline",
    "score_run",
    "build_report",
]
