"""Core module for the point cloud ray launcher."""

from .config import RunConfig, config_hash, load_config, resolve_thread_count
from .decorators import handle_pipeline_errors, pipeline_stage, validate_params
from .errors import (
    BackFacingHitError,
    ConfigError,
    DegenerateSegmentError,
    EdgeRecordError,
    EmptySceneError,
    GridTooLargeError,
    InvalidParameterError,
    MissingFieldError,
    PropagationError,
    SceneFormatError,
    SceneValidationError,
    StageError,
)

__all__ = [
    "RunConfig",
    "config_hash",
    "load_config",
    "resolve_thread_count",
    "handle_pipeline_errors",
    "pipeline_stage",
    "validate_params",
    "PropagationError",
    "EmptySceneError",
    "GridTooLargeError",
    "DegenerateSegmentError",
    "BackFacingHitError",
    "SceneFormatError",
    "MissingFieldError",
    "EdgeRecordError",
    "SceneValidationError",
    "InvalidParameterError",
    "ConfigError",
    "StageError",
]
