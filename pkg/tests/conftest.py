"""Shared fixtures for the point cloud ray launcher tests."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the repository root so `src` imports resolve
project_dir = Path(__file__).parent.parent
if str(project_dir) not in sys.path:
    sys.path.insert(0, str(project_dir))

from src.tools.scene import DiffractionEdge, LabeledPointCloud, Radio, RadioKind, Scene
from src.tools.voxelgrid import (
    IEKind,
    IntersectableEntity,
    VoxelizationParams,
    build_grid,
)


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run end-to-end acceptance tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end run on a sampled scene")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ==================== Builders ====================


def plane_cloud(
    origin, e1, e2, normal, label: int = 1, spacing: float = 0.02
) -> LabeledPointCloud:
    """Regular grid of points on the parallelogram origin + a*e1 + b*e2, a, b in [0, 1]."""
    origin, e1, e2 = (np.asarray(v, dtype=np.float64) for v in (origin, e1, e2))
    nu = max(1, int(round(np.linalg.norm(e1) / spacing)))
    nv = max(1, int(round(np.linalg.norm(e2) / spacing)))
    a, b = np.meshgrid((np.arange(nu) + 0.5) / nu, (np.arange(nv) + 0.5) / nv, indexing="ij")
    positions = origin + a.reshape(-1, 1) * e1 + b.reshape(-1, 1) * e2
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    return LabeledPointCloud(
        positions, np.tile(normal, (len(positions), 1)), np.full(len(positions), label)
    )


def make_scene(cloud=None, edges=(), tx=None, rx=None, carrier_frequency=60e9) -> Scene:
    transmitters = () if tx is None else (Radio(RadioKind.TX, tx, "tx0"),)
    receivers = () if rx is None else (Radio(RadioKind.RX, rx, "rx0"),)
    return Scene(
        cloud if cloud is not None else LabeledPointCloud.empty(),
        tuple(edges),
        transmitters,
        receivers,
        carrier_frequency,
    )


def patch_ie(scene: Scene, center=(0.0, 0.0, 0.0), subvoxel: float = 0.25) -> IntersectableEntity:
    """One SurfacePoints IE owning every point of the scene."""
    indices = np.arange(len(scene.points))
    return IntersectableEntity(
        kind=IEKind.SURFACE_POINTS,
        label=int(scene.points.labels[0]),
        reception_point=scene.points.positions.mean(axis=0),
        center=np.asarray(center, dtype=np.float64),
        radius=0.5 * subvoxel * np.sqrt(3.0),
        voxel=(0, 0, 0),
        subvoxel=(0, 0, 0),
        point_indices=indices,
    )


# ==================== Fixtures ====================


@pytest.fixture
def voxel_params():
    return VoxelizationParams(voxel_size=0.5, division_factor=2)


@pytest.fixture
def floor_scene():
    """Plane z = 0 under TX (0,0,1) and RX (1,0,1)."""
    cloud = plane_cloud((-0.5, -0.5, 0.0), (2.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0, 0, 1), label=1)
    return make_scene(cloud, tx=(0.0, 0.0, 1.0), rx=(1.0, 0.0, 1.0))


@pytest.fixture
def floor_grid(floor_scene, voxel_params):
    return build_grid(floor_scene, voxel_params)


@pytest.fixture
def ridge_edge():
    """Edge along x through the origin with faces sloping down on both sides."""
    s = 1.0 / np.sqrt(2.0)
    return DiffractionEdge((-1, 0, 0), (1, 0, 0), (0, -s, s), (0, s, s), 100)
