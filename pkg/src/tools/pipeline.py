"""
Pipeline orchestration for the point cloud ray launcher.

Covers: run configuration to stage parameters, the staged batch run
(load, validate, voxelize, trace, refine, dedup, write), oracle validation
on planar scenes and fixture generation.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import psutil

from ..core.config import RunConfig, config_hash, resolve_thread_count
from ..core.decorators import pipeline_stage
from ..core.errors import SceneValidationError
from ..utils.edges import dump_edges, dump_radios, load_edges, load_radios
from ..utils.path_io import write_paths
from ..utils.ply import load_point_cloud, write_point_cloud
from . import oracle
from .refine import (
    ExactPath,
    RefineParams,
    dedup_by_fresnel,
    dedup_by_label,
    refine_candidates,
)
from .scene import LabeledPointCloud, Scene, validate_scene
from .tracer import PathCandidate, TraceParams, trace_transmitter
from .voxelgrid import VoxelGrid, VoxelizationParams, build_grid

logger = logging.getLogger("pc-raylauncher.pipeline")


# ==================== Parameters ====================


def voxelization_params(config: RunConfig) -> VoxelizationParams:
    return VoxelizationParams(config.voxel_size_m, config.division_factor, config.max_cells)


def trace_params(config: RunConfig) -> TraceParams:
    return TraceParams(
        max_interactions=config.max_interactions,
        kappa=config.kappa,
        cone_apex_angle=config.cone_apex_angle_rad,
        diffraction_ray_count=config.diffraction_ray_count,
        max_diffractions=config.max_diffractions,
    )


def refine_params(config: RunConfig) -> RefineParams:
    return RefineParams(delta=config.delta, rho=config.rho, step_size=config.step_size)


# ==================== Summary ====================


@dataclass
class RunSummary:
    transmitters: int = 0
    receivers: int = 0
    points: int = 0
    edges: int = 0
    intersectable_entities: int = 0
    coarse_paths: int = 0
    refined_paths: int = 0
    after_label_dedup: int = 0
    exact_paths: int = 0
    rejections: Dict[str, int] = field(default_factory=dict)
    skipped_candidates: int = 0
    stage_times: Dict[str, float] = field(default_factory=dict)
    peak_rss_mb: float = 0.0
    output_path: Optional[str] = None
    config_hash: str = ""
    paths: List[ExactPath] = field(default_factory=list, repr=False)

    def sample_memory(self) -> None:
        rss = psutil.Process().memory_info().rss / (1024 * 1024)
        self.peak_rss_mb = max(self.peak_rss_mb, rss)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "transmitters": self.transmitters,
            "receivers": self.receivers,
            "points": self.points,
            "edges": self.edges,
            "intersectable_entities": self.intersectable_entities,
            "coarse_paths": self.coarse_paths,
            "refined_paths": self.refined_paths,
            "after_label_dedup": self.after_label_dedup,
            "exact_paths": self.exact_paths,
            "rejections": dict(self.rejections),
            "skipped_candidates": self.skipped_candidates,
            "stage_times_s": {k: round(v, 3) for k, v in self.stage_times.items()},
            "peak_rss_mb": round(self.peak_rss_mb, 1),
            "output_path": self.output_path,
            "config_hash": self.config_hash,
        }


# ==================== Stages ====================


@pipeline_stage("load")
def load_scene(config: RunConfig) -> Scene:
    cloud = load_point_cloud(config.scene_path) if config.scene_path else LabeledPointCloud.empty()
    edges = load_edges(config.edges_path) if config.edges_path else []
    transmitters, receivers = load_radios(config.radios_path) if config.radios_path else ((), ())
    return Scene(cloud, tuple(edges), transmitters, receivers, config.carrier_frequency_hz)


@pipeline_stage("validate")
def check_scene(scene: Scene) -> None:
    violations = validate_scene(scene)
    if violations:
        raise SceneValidationError(violations)


@pipeline_stage("voxelize")
def voxelize(scene: Scene, config: RunConfig) -> VoxelGrid:
    return build_grid(scene, voxelization_params(config))


@pipeline_stage("trace")
def trace_all(
    scene: Scene, grid: VoxelGrid, params: TraceParams, workers: int
) -> List[PathCandidate]:
    candidates: List[PathCandidate] = []
    for tx in scene.transmitters:
        candidates.extend(trace_transmitter(tx, grid, scene, params, workers))
    return candidates


@pipeline_stage("refine")
def refine_all(
    candidates: List[PathCandidate],
    grid: VoxelGrid,
    scene: Scene,
    params: RefineParams,
    workers: int,
):
    return refine_candidates(candidates, grid, scene, params, workers)


@pipeline_stage("dedup_label")
def label_dedup(paths: List[ExactPath]) -> List[ExactPath]:
    return dedup_by_label(paths)


@pipeline_stage("dedup_fresnel")
def fresnel_dedup(paths: List[ExactPath], carrier_frequency: float) -> List[ExactPath]:
    return dedup_by_fresnel(paths, carrier_frequency)


@pipeline_stage("write")
def write_output(paths: List[ExactPath], output_path: str, digest: str) -> None:
    write_paths(paths, output_path, digest)


def run_pipeline(config: RunConfig, scene: Optional[Scene] = None) -> RunSummary:
    """
    Run every stage for one configuration. A prebuilt scene skips loading;
    an empty output_path skips writing.
    """
    summary = RunSummary(config_hash=config_hash(config))
    timings = summary.stage_times
    workers = resolve_thread_count(config)
    logger.info(f"Run {summary.config_hash[:12]} with {workers} worker processes")

    if scene is None:
        scene = load_scene(config, timings=timings)
    summary.sample_memory()
    summary.transmitters = len(scene.transmitters)
    summary.receivers = len(scene.receivers)
    summary.points = len(scene.points)
    summary.edges = len(scene.edges)

    check_scene(scene, timings=timings)
    grid = voxelize(scene, config, timings=timings)
    summary.intersectable_entities = len(grid.ies)
    summary.sample_memory()

    candidates = trace_all(scene, grid, trace_params(config), workers, timings=timings)
    summary.coarse_paths = len(candidates)
    summary.sample_memory()

    refinement = refine_params(config)
    result = refine_all(candidates, grid, scene, refinement, workers, timings=timings)
    summary.refined_paths = len(result.paths)
    summary.rejections = result.rejections
    summary.skipped_candidates = result.skipped
    summary.sample_memory()

    paths = label_dedup(result.paths, timings=timings)
    summary.after_label_dedup = len(paths)
    if refinement.fresnel_enabled:
        paths = fresnel_dedup(paths, scene.carrier_frequency, timings=timings)
    summary.exact_paths = len(paths)
    summary.paths = paths

    if config.output_path:
        write_output(paths, config.output_path, summary.config_hash, timings=timings)
        summary.output_path = config.output_path
    summary.sample_memory()
    logger.info(
        f"Run finished: {summary.coarse_paths} coarse, {summary.exact_paths} exact paths"
    )
    return summary


# ==================== Oracle validation and fixtures ====================


def resolve_planar_scene(source: Union[str, Path]) -> oracle.PlanarScene:
    """A builder preset name or a planar scene JSON document."""
    if str(source) in oracle.BUILDERS:
        return oracle.BUILDERS[str(source)]()
    return oracle.load_planar_scene(source)


def validate_against_oracle(
    planar: oracle.PlanarScene, config: RunConfig, angle_tol_deg: float = 1.0
) -> Dict[str, Any]:
    """Sample the planar scene, run the pipeline in memory and match against the oracle."""
    cloud = oracle.sample_planar_scene(planar, config.density, config.seed)
    scene = oracle.to_scene(planar, cloud, config.carrier_frequency_hz)
    summary = run_pipeline(config, scene=scene)

    reference = oracle.image_method_paths(
        planar, min(config.max_interactions, oracle.MAX_IMAGE_ORDER)
    )
    if config.max_diffractions >= 1 and config.max_interactions >= 1:
        reference += oracle.single_diffraction_paths(planar)
    report = oracle.match_paths(summary.paths, reference, math.radians(angle_tol_deg))
    result = report.to_dict()
    result["found_paths"] = len(summary.paths)
    result["summary"] = summary.to_dict()
    logger.info(
        f"Oracle validation: {report.matched_count}/{len(reference)} reference paths matched"
    )
    return result


def make_scene(
    preset_or_path: Union[str, Path],
    out_dir: Union[str, Path],
    density: float = 5000.0,
    seed: int = 0,
    binary: bool = True,
) -> Dict[str, str]:
    """
    Write a sampled planar scene as pipeline inputs: point file, edges,
    radios, the planar description itself and a matching config document.
    """
    planar = resolve_planar_scene(preset_or_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cloud = oracle.sample_planar_scene(planar, density, seed)
    scene = oracle.to_scene(planar, cloud)

    files = {
        "scene_path": out / "scene.ply",
        "edges_path": out / "edges.json",
        "radios_path": out / "radios.json",
        "planar_path": out / "planar.json",
        "config_path": out / "config.json",
    }
    write_point_cloud(cloud, files["scene_path"], binary=binary)
    dump_edges(scene.edges, files["edges_path"])
    dump_radios(scene.transmitters, scene.receivers, files["radios_path"])
    oracle.dump_planar_scene(planar, files["planar_path"])

    config = RunConfig(
        scene_path=str(files["scene_path"]),
        edges_path=str(files["edges_path"]),
        radios_path=str(files["radios_path"]),
        output_path=str(out / "paths.jsonl"),
        density=density,
        seed=seed,
    )
    files["config_path"].write_text(json.dumps(config.to_dict(), indent=2))
    logger.info(f"Generated {len(cloud)} points into {out}")
    return {k: str(v) for k, v in files.items()}
