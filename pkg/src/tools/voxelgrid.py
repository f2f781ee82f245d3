"""
Voxelization tools for the point cloud ray launcher.

Covers: two-level voxel grid (low resolution voxels, D_v^3 subvoxels each),
intersectable entities (IEs) and the Chebyshev march-distance field.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from ..core.errors import GridTooLargeError, InvalidParameterError
from .scene import Scene, scene_bounds

logger = logging.getLogger("pc-raylauncher.voxelgrid")

# Stored in every cell when the grid holds no IEs at all.
NO_IES_DISTANCE = -1
RECEIVER_LABEL = -1

Index3 = Tuple[int, int, int]


class IEKind(IntEnum):
    SURFACE_POINTS = 0
    EDGE_SEGMENT = 1
    RECEIVER = 2


@dataclass(frozen=True)
class VoxelizationParams:
    voxel_size: float = 0.5
    division_factor: int = 2
    max_cells: int = 2**27

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise InvalidParameterError("voxel_size", "> 0")
        if self.division_factor < 1:
            raise InvalidParameterError("division_factor", ">= 1")

    @property
    def subvoxel_size(self) -> float:
        return self.voxel_size / self.division_factor


@dataclass(frozen=True, eq=False)
class IntersectableEntity:
    """
    Subvoxel-bounded piece of geometry: surface points of one label, one
    edge segment, or one receiver.
    """

    kind: IEKind
    label: int
    reception_point: np.ndarray
    center: np.ndarray
    radius: float
    voxel: Index3
    subvoxel: Index3
    point_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    segment: Optional[Tuple[np.ndarray, np.ndarray]] = None
    edge_index: int = -1
    receiver_id: Optional[str] = None

    @property
    def bounding_sphere(self) -> Tuple[np.ndarray, float]:
        return self.center, self.radius

    @property
    def subvoxel_id(self) -> Tuple[Index3, Index3]:
        return self.voxel, self.subvoxel

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def subvoxel_size(self) -> float:
        """Edge length of the bounding subvoxel."""
        return 2.0 * self.radius / np.sqrt(3.0)


class VoxelCell(NamedTuple):
    has_ies: bool
    march_distance: int
    ie_range: range


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: np.ndarray
    dims: Index3
    voxel_size: float
    division_factor: int
    has_ies: np.ndarray
    march_distance: np.ndarray
    ie_ranges: Dict[int, Tuple[int, int]]
    ies: Tuple[IntersectableEntity, ...]

    # ==================== Geometry ====================

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def subvoxel_size(self) -> float:
        return self.voxel_size / self.division_factor

    @property
    def subvoxel_diameter(self) -> float:
        return self.subvoxel_size * np.sqrt(3.0)

    @property
    def voxel_radius(self) -> float:
        return 0.5 * self.voxel_size * np.sqrt(3.0)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.voxel_size

    @property
    def is_empty(self) -> bool:
        return not self.ies

    def in_bounds(self, ijk) -> bool:
        return all(0 <= ijk[a] < self.dims[a] for a in range(3))

    def voxel_of(self, point: np.ndarray) -> Optional[Index3]:
        """Voxel containing a point, or None outside the grid."""
        c = np.floor((point - self.origin) / self.voxel_size).astype(np.int64)
        ijk = (int(c[0]), int(c[1]), int(c[2]))
        return ijk if self.in_bounds(ijk) else None

    def voxel_center(self, ijk) -> np.ndarray:
        return self.origin + (np.asarray(ijk, dtype=np.float64) + 0.5) * self.voxel_size

    def flat_index(self, ijk) -> int:
        return int(np.ravel_multi_index(tuple(int(v) for v in ijk), self.dims))

    def cell(self, ijk) -> VoxelCell:
        start, stop = self.ie_ranges.get(self.flat_index(ijk), (0, 0))
        return VoxelCell(
            bool(self.has_ies[tuple(ijk)]),
            int(self.march_distance[tuple(ijk)]),
            range(start, stop),
        )

    def ie_indices(self, ijk) -> range:
        start, stop = self.ie_ranges.get(self.flat_index(ijk), (0, 0))
        return range(start, stop)

    def neighborhood(self, ijk) -> Iterator[Index3]:
        """The in-bounds voxels of the 3x3x3 block around ijk."""
        i, j, k = ijk
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for dk in (-1, 0, 1):
                    n = (i + di, j + dj, k + dk)
                    if self.in_bounds(n):
                        yield n

    # ==================== Packed IE columns ====================

    @cached_property
    def ie_centers(self) -> np.ndarray:
        return np.array([ie.center for ie in self.ies]).reshape(-1, 3)

    @cached_property
    def ie_reception(self) -> np.ndarray:
        return np.array([ie.reception_point for ie in self.ies]).reshape(-1, 3)

    @cached_property
    def ie_radii(self) -> np.ndarray:
        return np.array([ie.radius for ie in self.ies], dtype=np.float64)

    @cached_property
    def ie_kinds(self) -> np.ndarray:
        return np.array([int(ie.kind) for ie in self.ies], dtype=np.int64)

    @cached_property
    def ie_labels(self) -> np.ndarray:
        return np.array([ie.label for ie in self.ies], dtype=np.int64)

    @cached_property
    def _surface_index(self) -> Tuple[np.ndarray, Optional[cKDTree]]:
        ids = np.flatnonzero(self.ie_kinds == IEKind.SURFACE_POINTS)
        tree = cKDTree(self.ie_reception[ids]) if len(ids) else None
        return ids, tree

    def surface_ies_near(self, point: np.ndarray, radius: float) -> List[int]:
        """SurfacePoints IE indices whose reception point lies within radius, nearest first."""
        ids, tree = self._surface_index
        if tree is None:
            return []
        found = tree.query_ball_point(point, radius)
        if not found:
            return []
        found = np.asarray(found, dtype=np.int64)
        d = np.linalg.norm(self.ie_reception[ids[found]] - point, axis=1)
        order = np.lexsort((ids[found], d))
        return [int(ids[found][i]) for i in order]


# ==================== Construction ====================


def _ie_sort_key(ie: IntersectableEntity, dims: Index3, dv: int) -> tuple:
    return (
        int(np.ravel_multi_index(ie.voxel, dims)),
        int(np.ravel_multi_index(ie.subvoxel, (dv, dv, dv))),
        int(ie.kind),
        ie.label,
        ie.edge_index,
        ie.receiver_id or "",
    )


def _clip_segment(
    start: np.ndarray, end: np.ndarray, origin: np.ndarray, sub: float, sub_dims: np.ndarray
) -> List[Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Split a segment at subvoxel faces; returns (piece_start, piece_end, subvoxel coords)."""
    c0 = (start - origin) / sub
    c1 = (end - origin) / sub
    breaks = [0.0, 1.0]
    for a in range(3):
        span = c1[a] - c0[a]
        if abs(span) < 1e-12:
            continue
        lo, hi = sorted((c0[a], c1[a]))
        for plane in range(int(np.floor(lo)) + 1, int(np.ceil(hi))):
            breaks.append((plane - c0[a]) / span)
    breaks = np.unique(np.clip(np.asarray(breaks), 0.0, 1.0))

    pieces: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for t0, t1 in zip(breaks[:-1], breaks[1:]):
        if t1 - t0 < 1e-12:
            continue
        mid = c0 + 0.5 * (t0 + t1) * (c1 - c0)
        sc = np.clip(np.floor(mid).astype(np.int64), 0, sub_dims - 1)
        p0 = start + t0 * (end - start)
        p1 = start + t1 * (end - start)
        if pieces and np.array_equal(pieces[-1][2], sc):
            pieces[-1] = (pieces[-1][0], p1, sc)
        else:
            pieces.append((p0, p1, sc))
    return pieces


def build_grid(scene: Scene, params: VoxelizationParams) -> VoxelGrid:
    """
    Voxelize a scene: bin points per (subvoxel, label), clip edges to subvoxels,
    place receivers, then fill the march-distance field.
    """
    bounds = scene_bounds(scene, params.voxel_size)
    dims_arr = np.maximum(np.ceil(bounds.extent / params.voxel_size - 1e-9).astype(np.int64), 1)
    cells = int(np.prod(dims_arr))
    if cells > params.max_cells:
        raise GridTooLargeError(cells, params.max_cells)

    dims: Index3 = tuple(int(d) for d in dims_arr)
    origin = np.asarray(bounds.minimum, dtype=np.float64)
    dv = params.division_factor
    sub = params.subvoxel_size
    sub_dims = dims_arr * dv
    radius = 0.5 * sub * np.sqrt(3.0)

    def make_box(sc: np.ndarray) -> Tuple[Index3, Index3, np.ndarray]:
        voxel = tuple(int(v) for v in sc // dv)
        local = tuple(int(v) for v in sc % dv)
        center = origin + (sc.astype(np.float64) + 0.5) * sub
        return voxel, local, center

    ies: List[IntersectableEntity] = []

    cloud = scene.points
    if len(cloud):
        sc_all = np.floor((cloud.positions - origin) / sub).astype(np.int64)
        sc_all = np.clip(sc_all, 0, sub_dims - 1)
        keys = np.ravel_multi_index(tuple(sc_all.T), tuple(int(d) for d in sub_dims))
        order = np.lexsort((np.arange(len(cloud)), cloud.labels, keys))
        sorted_keys = keys[order]
        sorted_labels = cloud.labels[order]
        change = np.ones(len(order), dtype=bool)
        change[1:] = (sorted_keys[1:] != sorted_keys[:-1]) | (sorted_labels[1:] != sorted_labels[:-1])
        starts = np.flatnonzero(change)
        stops = np.append(starts[1:], len(order))
        sums = np.add.reduceat(cloud.positions[order], starts, axis=0)
        centroids = sums / (stops - starts)[:, None]
        for g, (a, b) in enumerate(zip(starts, stops)):
            members = order[a:b]
            voxel, local, center = make_box(sc_all[members[0]])
            ies.append(
                IntersectableEntity(
                    kind=IEKind.SURFACE_POINTS,
                    label=int(sorted_labels[a]),
                    reception_point=centroids[g],
                    center=center,
                    radius=radius,
                    voxel=voxel,
                    subvoxel=local,
                    point_indices=np.sort(members),
                )
            )

    for edge_index, edge in enumerate(scene.edges):
        for p0, p1, sc in _clip_segment(edge.start, edge.end, origin, sub, sub_dims):
            voxel, local, center = make_box(sc)
            ies.append(
                IntersectableEntity(
                    kind=IEKind.EDGE_SEGMENT,
                    label=edge.label,
                    reception_point=0.5 * (p0 + p1),
                    center=center,
                    radius=radius,
                    voxel=voxel,
                    subvoxel=local,
                    segment=(p0, p1),
                    edge_index=edge_index,
                )
            )

    for rx in scene.receivers:
        sc = np.clip(np.floor((rx.position - origin) / sub).astype(np.int64), 0, sub_dims - 1)
        voxel, local, center = make_box(sc)
        ies.append(
            IntersectableEntity(
                kind=IEKind.RECEIVER,
                label=RECEIVER_LABEL,
                reception_point=np.array(rx.position),
                center=center,
                radius=radius,
                voxel=voxel,
                subvoxel=local,
                receiver_id=rx.id,
            )
        )

    ies.sort(key=lambda ie: _ie_sort_key(ie, dims, dv))

    has_ies = np.zeros(dims, dtype=bool)
    ie_ranges: Dict[int, Tuple[int, int]] = {}
    for index, ie in enumerate(ies):
        flat = int(np.ravel_multi_index(ie.voxel, dims))
        start, _ = ie_ranges.get(flat, (index, index))
        ie_ranges[flat] = (start, index + 1)
        has_ies[ie.voxel] = True

    grid = VoxelGrid(
        origin=origin,
        dims=dims,
        voxel_size=params.voxel_size,
        division_factor=dv,
        has_ies=has_ies,
        march_distance=np.zeros(dims, dtype=np.int32),
        ie_ranges=ie_ranges,
        ies=tuple(ies),
    )
    grid = compute_march_distances(grid)
    logger.info(
        f"Built {dims[0]}x{dims[1]}x{dims[2]} grid: {len(ie_ranges)} occupied voxels, {len(ies)} IEs"
    )
    return grid


def compute_march_distances(grid: VoxelGrid) -> VoxelGrid:
    """Exact Chebyshev distance (in voxels) from every voxel to the nearest IE voxel."""
    if not grid.has_ies.any():
        distances = np.full(grid.dims, NO_IES_DISTANCE, dtype=np.int32)
    else:
        distances = ndimage.distance_transform_cdt(~grid.has_ies, metric="chessboard")
        distances = distances.astype(np.int32)
    return dataclasses.replace(grid, march_distance=distances)


def reception_point_of(ie: IntersectableEntity, scene: Scene) -> np.ndarray:
    """Centroid of member points, segment midpoint, or the receiver position."""
    if ie.kind == IEKind.SURFACE_POINTS:
        return scene.points.positions[ie.point_indices].mean(axis=0)
    if ie.kind == IEKind.EDGE_SEGMENT:
        return 0.5 * (ie.segment[0] + ie.segment[1])
    return np.array(scene.receiver(ie.receiver_id).position)


def grid_stats(grid: VoxelGrid) -> Dict[str, object]:
    """Summary counts for the voxelize subcommand."""
    kinds = grid.ie_kinds
    return {
        "dims": list(grid.dims),
        "origin": [float(x) for x in grid.origin],
        "voxel_size": grid.voxel_size,
        "division_factor": grid.division_factor,
        "cells": grid.n_cells,
        "occupied_voxels": len(grid.ie_ranges),
        "surface_ies": int(np.sum(kinds == IEKind.SURFACE_POINTS)),
        "edge_ies": int(np.sum(kinds == IEKind.EDGE_SEGMENT)),
        "receiver_ies": int(np.sum(kinds == IEKind.RECEIVER)),
        "max_march_distance": int(grid.march_distance.max()) if grid.n_cells else 0,
    }
