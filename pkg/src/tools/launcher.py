"""
Tool-facing operations for the point cloud ray launcher server.

Covers: full runs, grid statistics, oracle validation and scene generation.
Every function returns plain JSON-able data or an "Error: ..." string.
"""

from typing import Any, Dict, Optional

from ..core import handle_pipeline_errors, load_config, validate_params
from . import oracle, pipeline
from .voxelgrid import grid_stats

# ==================== Runs ====================


def _config(config_path: Optional[str], overrides: Optional[Dict[str, Any]]):
    return load_config(config_path or None, overrides or {})


@handle_pipeline_errors
def trace_scene(
    config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Run the whole pipeline and return the run summary."""
    summary = pipeline.run_pipeline(_config(config_path, overrides))
    return summary.to_dict()


@handle_pipeline_errors
def voxelize_scene(
    config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Load, validate and voxelize a scene; return grid statistics."""
    config = _config(config_path, overrides)
    scene = pipeline.load_scene(config)
    pipeline.check_scene(scene)
    return grid_stats(pipeline.voxelize(scene, config))


# ==================== Oracle ====================


def list_presets() -> list:
    return sorted(oracle.BUILDERS)


@handle_pipeline_errors
@validate_params(angle_tol_deg=lambda a: 0 < a < 90)
def validate_scene_against_oracle(
    scene: str,
    angle_tol_deg: float = 1.0,
    config_path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """Match pipeline output on a planar preset or document against analytic paths."""
    planar = pipeline.resolve_planar_scene(scene)
    return pipeline.validate_against_oracle(
        planar, _config(config_path, overrides), angle_tol_deg=angle_tol_deg
    )


@handle_pipeline_errors
@validate_params(density=lambda d: d > 0, seed=lambda s: s >= 0)
def make_scene(
    scene: str, out_dir: str, density: float = 5000.0, seed: int = 0, binary: bool = True
) -> Dict[str, str]:
    """Sample a planar scene and write it as pipeline inputs."""
    return pipeline.make_scene(scene, out_dir, density, seed, binary)
