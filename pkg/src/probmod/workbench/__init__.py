"""Command-line workbench: example models, fitting, prediction and calibration."""

from .commands import (
    cmd_demo_branching,
    cmd_diagnose,
    cmd_fit,
    cmd_lift,
    cmd_predict,
    load_manifest,
    predict,
    run_branching,
    run_fit,
)
from .config import ConfigError, RunConfig, build_config
from .data import DataError
from .models import MODEL_SPECS

__all__ = [
    "cmd_demo_branching",
    "cmd_diagnose",
    "cmd_fit",
    "cmd_lift",
    "cmd_predict",
    "load_manifest",
    "predict",
    "run_branching",
    "run_fit",
    "ConfigError",
    "RunConfig",
    "build_config",
    "DataError",
    "MODEL_SPECS",
]
