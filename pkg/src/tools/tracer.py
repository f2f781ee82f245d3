"""
Coarse path tracing tools for the point cloud ray launcher.

Covers: transmission phase (one ray per IE), reflected and Keller-cone
diffracted conical rays, voxel cone tracing over the march-distance field,
and breadth-wise propagation into coarse path candidates.

A conical ray keeps a virtual apex behind its origin (the transmitter or the
last diffraction point, unfolded through reflections) and an angular spread
set by the footprint of the IE it was launched from, on top of the constant
apex angle.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import BackFacingHitError, InvalidParameterError
from ..utils.parallel import ordered_map
from ..utils.traversal import Index3, clip_to_box, walk_voxels
from ..utils.vecmath import norm, normalize, reflect, rounded_key
from .scene import DiffractionEdge, Radio, Scene
from .surface import (
    DEFAULT_STEP_BUDGET,
    SurfaceHit,
    hit_epsilon,
    hit_in_sphere,
    march_segment,
)
from .voxelgrid import IEKind, IntersectableEntity, VoxelGrid

logger = logging.getLogger("pc-raylauncher.tracer")

KELLER_PARALLEL_LIMIT = 0.999
# Hits closer than this many hit epsilons to a ray origin belong to the origin surface.
_MIN_HIT_FACTOR = 10.0


class InteractionKind(str, Enum):
    REFLECTION = "reflection"
    DIFFRACTION = "diffraction"


@dataclass(frozen=True, eq=False)
class Interaction:
    """
    One node of a coarse chain. ``normal`` is the surface normal for a
    reflection and the unit edge direction for a diffraction.
    """

    kind: InteractionKind
    position: np.ndarray
    label: int
    ie_index: int
    normal: np.ndarray
    edge_index: int = -1

    def key(self) -> tuple:
        return (self.kind.value, self.label, rounded_key(self.position))


@dataclass(frozen=True)
class TraceParams:
    max_interactions: int = 5
    kappa: int = 100
    cone_apex_angle: float = math.radians(1.0)
    diffraction_ray_count: int = 360
    max_diffractions: int = 1
    step_budget: int = DEFAULT_STEP_BUDGET

    def __post_init__(self):
        if self.max_interactions < 0:
            raise InvalidParameterError("max_interactions", ">= 0")
        if self.kappa < 1:
            raise InvalidParameterError("kappa", ">= 1")
        if not 0.0 < self.cone_apex_angle < math.pi / 4:
            raise InvalidParameterError("cone_apex_angle", "in (0, pi/4)")
        if self.diffraction_ray_count < 2:
            raise InvalidParameterError("diffraction_ray_count", ">= 2")
        if self.max_diffractions < 0:
            raise InvalidParameterError("max_diffractions", ">= 0")

    @property
    def half_angle(self) -> float:
        return 0.5 * self.cone_apex_angle


@dataclass(frozen=True, eq=False)
class SeparationPlane:
    point: np.ndarray
    normal: np.ndarray

    def signed_distance(self, q: np.ndarray) -> float:
        return float(np.dot(q - self.point, self.normal))


@dataclass(frozen=True, eq=False)
class ConicalRay:
    origin: np.ndarray
    direction: np.ndarray
    apex_angle: float
    separation_planes: Tuple[SeparationPlane, ...] = ()
    provenance: Tuple[Interaction, ...] = ()
    excluded: FrozenSet[int] = frozenset()
    apex_distance: float = 0.0
    spread: float = 0.0

    @property
    def half_angle(self) -> float:
        return 0.5 * self.apex_angle + self.spread

    @property
    def apex(self) -> np.ndarray:
        return self.origin - self.apex_distance * self.direction

    @property
    def diffraction_count(self) -> int:
        return sum(1 for i in self.provenance if i.kind == InteractionKind.DIFFRACTION)

    @property
    def label_sequence(self) -> Tuple[int, ...]:
        return tuple(i.label for i in self.provenance)

    def sort_key(self) -> tuple:
        return (
            tuple(i.key() for i in self.provenance),
            rounded_key(self.direction),
            rounded_key(self.origin),
        )


@dataclass(frozen=True, eq=False)
class PathCandidate:
    tx_id: str
    rx_id: str
    interactions: Tuple[Interaction, ...]
    coarse_length: float

    @property
    def label_sequence(self) -> Tuple[int, ...]:
        return tuple(i.label for i in self.interactions)

    @property
    def kind_sequence(self) -> Tuple[str, ...]:
        return tuple(i.kind.value for i in self.interactions)

    @property
    def diffraction_count(self) -> int:
        return sum(1 for i in self.interactions if i.kind == InteractionKind.DIFFRACTION)

    def chain_key(self) -> tuple:
        return (self.tx_id, self.rx_id, self.kind_sequence, self.label_sequence)

    def sort_key(self) -> tuple:
        return self.chain_key() + (
            round(self.coarse_length, 9),
            tuple(rounded_key(i.position) for i in self.interactions),
        )


class Reception(NamedTuple):
    """An accepted IE: the hit (surfaces) or reception point (edges, receivers)."""

    ie_index: int
    point: np.ndarray
    hit: Optional[SurfaceHit]
    distance: float


class EdgeHit(NamedTuple):
    ie: IntersectableEntity
    point: np.ndarray
    edge: DiffractionEdge


# ==================== Geometric tests ====================


def cone_intersects_sphere(
    apex: np.ndarray, direction: np.ndarray, half_angle: float, center: np.ndarray, radius: float
) -> bool:
    """Conservative cone/sphere overlap: angle to center within half_angle + asin(r/dist)."""
    v = center - apex
    dist = norm(v)
    if dist <= radius:
        return True
    cos_angle = float(np.dot(v, direction)) / dist
    angle = math.acos(max(-1.0, min(1.0, cos_angle)))
    return angle <= half_angle + math.asin(min(1.0, radius / dist))


def segment_visible(
    a: np.ndarray,
    b: np.ndarray,
    grid: VoxelGrid,
    scene: Scene,
    epsilon_hit: float,
    exempt: Sequence[Tuple[np.ndarray, Optional[int]]] = (),
    skip: FrozenSet[int] = frozenset(),
) -> bool:
    """
    True when no surface blocks the open segment a->b.

    Hits within one subvoxel diameter of an exempt point are ignored when the
    hit's label matches the exempt label (None matches any label).
    """
    offset = b - a
    length = norm(offset)
    if length < epsilon_hit:
        return True
    direction = offset / length
    margin = _MIN_HIT_FACTOR * epsilon_hit
    radius = grid.subvoxel_diameter

    for voxel in walk_voxels(grid.origin, grid.dims, grid.voxel_size, a, b):
        for idx in grid.ie_indices(voxel):
            if idx in skip:
                continue
            ie = grid.ies[idx]
            if ie.kind != IEKind.SURFACE_POINTS:
                continue
            t_c = min(max(float(np.dot(ie.center - a, direction)), 0.0), length)
            if norm(a + t_c * direction - ie.center) > ie.radius:
                continue
            hit = march_segment(a, direction, ie, scene, epsilon_hit, ie_index=idx)
            if hit is None or not hit_in_sphere(hit, ie):
                continue
            if hit.distance_along_ray <= margin or hit.distance_along_ray >= length - margin:
                continue
            if any(
                (label is None or label == ie.label) and norm(hit.position - p) <= radius
                for p, label in exempt
            ):
                continue
            return False
    return True


def _exclusion_set(
    grid: VoxelGrid, seed_index: int, point: np.ndarray, label: Optional[int]
) -> FrozenSet[int]:
    """The launching IE plus nearby IEs of the same label (any non-receiver IE when label is None)."""
    excluded = {seed_index}
    voxel = grid.voxel_of(point)
    if voxel is None:
        return frozenset(excluded)
    radius = grid.subvoxel_diameter
    for u in grid.neighborhood(voxel):
        for idx in grid.ie_indices(u):
            ie = grid.ies[idx]
            if ie.kind == IEKind.RECEIVER:
                continue
            if label is not None and ie.label != label:
                continue
            if norm(ie.reception_point - point) <= radius:
                excluded.add(idx)
    return frozenset(excluded)


# ==================== Transmission Phase ====================


def _transmission_visit(
    tx: Radio, grid: VoxelGrid, scene: Scene, params: TraceParams, idx: int
):
    """Transmission ray toward one IE: a LOS candidate, a Reception or None."""
    eps = hit_epsilon(grid.voxel_size)
    origin = tx.position
    ie = grid.ies[idx]
    target = ie.reception_point
    length = norm(target - origin)
    if length < eps:
        return None
    if ie.kind == IEKind.RECEIVER:
        if segment_visible(origin, target, grid, scene, eps):
            return PathCandidate(tx.id, ie.receiver_id, (), length)
        return None
    if ie.kind == IEKind.EDGE_SEGMENT:
        if segment_visible(origin, target, grid, scene, eps, exempt=[(target, None)]):
            return Reception(idx, target, None, length)
        return None
    hit = march_segment(
        origin, (target - origin) / length, ie, scene, eps, params.step_budget, idx
    )
    if hit is None or not hit_in_sphere(hit, ie):
        return None
    if not segment_visible(
        origin, hit.position, grid, scene, eps,
        exempt=[(hit.position, ie.label)], skip=frozenset({idx}),
    ):
        return None
    return Reception(idx, hit.position, hit, hit.distance_along_ray)


def transmission_phase(
    tx: Radio, grid: VoxelGrid, scene: Scene, params: TraceParams, workers: int = 1
) -> Tuple[List[PathCandidate], List[Reception]]:
    """
    Cast one straight ray from the transmitter toward every IE's reception point.

    Visible receivers become LOS candidates; visible surface and edge IEs become
    initial hits for the propagation phase.
    """
    results = ordered_map(
        _transmission_visit, range(len(grid.ies)), workers,
        shared=(tx, grid, scene, params),
    )
    los = [r for r in results if isinstance(r, PathCandidate)]
    initial = [r for r in results if isinstance(r, Reception)]
    logger.info(
        f"Transmission phase for {tx.id}: {len(los)} LOS, {len(initial)} initial hits "
        f"of {len(grid.ies)} IEs"
    )
    return los, initial


# ==================== Ray Construction ====================


def reflect_ray(
    hit: SurfaceHit,
    incoming_direction: np.ndarray,
    params: TraceParams,
    epsilon_hit: float = hit_epsilon(0.5),
    provenance: Tuple[Interaction, ...] = (),
    excluded: FrozenSet[int] = frozenset(),
    apex_distance: float = 0.0,
    spread: float = 0.0,
) -> ConicalRay:
    """Mirror the incoming direction about the hit normal; one separation plane at the origin."""
    n = hit.normal
    if float(np.dot(incoming_direction, n)) >= 0.0:
        raise BackFacingHitError(hit.label)
    direction = normalize(reflect(incoming_direction, n))
    origin = hit.position + epsilon_hit * n
    return ConicalRay(
        origin=origin,
        direction=direction,
        apex_angle=params.cone_apex_angle,
        separation_planes=(SeparationPlane(origin, n),),
        provenance=provenance,
        excluded=excluded,
        apex_distance=apex_distance,
        spread=spread,
    )


def diffract_rays(
    edge_hit: EdgeHit,
    incoming_direction: np.ndarray,
    params: TraceParams,
    provenance: Tuple[Interaction, ...] = (),
    excluded: FrozenSet[int] = frozenset(),
    spread: float = 0.0,
) -> List[ConicalRay]:
    """
    Sample the Keller cone around the edge at uniform azimuth spacing.

    Azimuth 0 continues the incident ray. Each ray carries two separation
    planes through the edge, halfway in azimuth to its neighbors.
    """
    edge = edge_hit.edge
    point = edge_hit.point
    w = edge.direction
    d = incoming_direction
    cos_beta = float(np.dot(d, w))
    if abs(cos_beta) > KELLER_PARALLEL_LIMIT:
        return []
    if not edge.is_exterior_for(d):
        return []

    e1 = normalize(d - cos_beta * w)
    e2 = np.cross(w, e1)
    sin_beta = math.sqrt(max(0.0, 1.0 - cos_beta * cos_beta))
    count = params.diffraction_ray_count
    step = 2.0 * math.pi / count

    def radial(phi: float) -> np.ndarray:
        return math.cos(phi) * e1 + math.sin(phi) * e2

    rays = []
    for j in range(count):
        phi = j * step
        direction = cos_beta * w + sin_beta * radial(phi)
        if edge.enters_solid(direction):
            continue
        lower = SeparationPlane(point, np.cross(w, radial(phi - 0.5 * step)))
        upper = SeparationPlane(point, np.cross(radial(phi + 0.5 * step), w))
        rays.append(
            ConicalRay(
                origin=point,
                direction=direction,
                apex_angle=params.cone_apex_angle,
                separation_planes=(lower, upper),
                provenance=provenance,
                excluded=excluded,
                apex_distance=0.0,
                spread=spread,
            )
        )
    return rays


# ==================== Voxel Cone Tracing ====================


def _last_reflection_label(ray: ConicalRay) -> Optional[int]:
    if ray.provenance and ray.provenance[-1].kind == InteractionKind.REFLECTION:
        return ray.provenance[-1].label
    return None


def march_center_line(
    grid: VoxelGrid, origin: np.ndarray, direction: np.ndarray
) -> Iterator[Tuple[Index3, int, float]]:
    """
    Sphere-march a center line through the grid, yielding (voxel, march
    distance, ray parameter) at every sample. Steps are max(d - 1, 1) voxels,
    so every IE voxel the line crosses lies in the 3x3x3 block of a sample
    with d <= 1.
    """
    far = 2.0 * norm(grid.upper - grid.origin) + norm(origin - grid.origin)
    span = clip_to_box(origin, origin + far * direction, grid.origin, grid.upper)
    if span is None:
        return
    t, t_exit = span[0] * far, span[1] * far
    steps = 0
    max_steps = int(sum(grid.dims)) * 4 + 8
    while t <= t_exit and steps < max_steps:
        steps += 1
        voxel = grid.voxel_of(origin + t * direction)
        if voxel is None:
            return
        distance = int(grid.march_distance[voxel])
        yield voxel, distance, t
        t += max(distance - 1, 1) * grid.voxel_size


def voxel_cone_trace(
    ray: ConicalRay, grid: VoxelGrid, scene: Scene, params: TraceParams
) -> List[Reception]:
    """
    March the ray through the grid and collect accepted receptions.

    The center ray advances max(march_distance - 1, 1) voxels per step. Where
    the current voxel holds IEs or sits next to one, the 3x3x3 block is
    evaluated: voxel sphere test, IE sphere test, separation planes, then
    visibility. Surfaces stop the ray: only the first surface hit by the
    center line is returned, and traversal ends just past it.
    """
    if grid.is_empty:
        return []
    eps = hit_epsilon(grid.voxel_size)
    min_hit = _MIN_HIT_FACTOR * eps
    origin, direction = ray.origin, ray.direction
    apex, half = ray.apex, ray.half_angle

    origin_label = _last_reflection_label(ray)
    evaluated = set()
    receptions: List[Reception] = []
    first_surface: Optional[Reception] = None

    def accept(idx: int) -> Optional[Reception]:
        if idx in ray.excluded:
            return None
        ie = grid.ies[idx]
        if not cone_intersects_sphere(apex, direction, half, ie.center, ie.radius):
            return None
        q = ie.reception_point
        if any(p.signed_distance(q) <= 0.0 for p in ray.separation_planes):
            return None
        if ie.kind == IEKind.SURFACE_POINTS:
            hit = march_segment(origin, direction, ie, scene, eps, params.step_budget, idx)
            if hit is None or hit.distance_along_ray < min_hit or not hit_in_sphere(hit, ie):
                return None
            if any(p.signed_distance(hit.position) <= 0.0 for p in ray.separation_planes):
                return None
            return Reception(idx, hit.position, hit, hit.distance_along_ray)
        length = norm(q - origin)
        if length < min_hit:
            return None
        exempt = [(origin, origin_label)]
        if ie.kind == IEKind.EDGE_SEGMENT:
            exempt.append((q, None))
        if not segment_visible(origin, q, grid, scene, eps, exempt=exempt):
            return None
        return Reception(idx, q, None, length)

    for voxel, distance, t in march_center_line(grid, origin, direction):
        if distance <= 1:
            for u in grid.neighborhood(voxel):
                if u in evaluated:
                    continue
                evaluated.add(u)
                if not grid.has_ies[u]:
                    continue
                if not cone_intersects_sphere(
                    apex, direction, half, grid.voxel_center(u), grid.voxel_radius
                ):
                    continue
                for idx in grid.ie_indices(u):
                    rec = accept(idx)
                    if rec is None:
                        continue
                    if rec.hit is not None:
                        if first_surface is None or (rec.distance, rec.ie_index) < (
                            first_surface.distance, first_surface.ie_index
                        ):
                            first_surface = rec
                    else:
                        receptions.append(rec)
        if first_surface is not None and t > first_surface.distance + grid.voxel_size:
            break

    if first_surface is not None:
        receptions.append(first_surface)
    receptions.sort(key=lambda r: (r.distance, r.ie_index))
    return receptions


# ==================== Propagation ====================


def cap_by_label_sequence(candidates: List[PathCandidate], kappa: int) -> List[PathCandidate]:
    """Canonically sort, then keep the first kappa candidates per (tx, rx, kinds, labels)."""
    kept: List[PathCandidate] = []
    counts: Dict[tuple, int] = defaultdict(int)
    for cand in sorted(candidates, key=lambda c: c.sort_key()):
        key = cand.chain_key()
        if counts[key] < kappa:
            counts[key] += 1
            kept.append(cand)
    return kept


def _coarse_length(tx: Radio, interactions: Tuple[Interaction, ...], end: np.ndarray) -> float:
    points = [tx.position] + [i.position for i in interactions] + [end]
    return float(sum(norm(b - a) for a, b in zip(points[:-1], points[1:])))


def _spawn(
    reception: Reception,
    source: np.ndarray,
    parent: Optional[ConicalRay],
    grid: VoxelGrid,
    scene: Scene,
    params: TraceParams,
) -> List[ConicalRay]:
    """New rays leaving an accepted surface or edge reception."""
    ie = grid.ies[reception.ie_index]
    provenance = parent.provenance if parent is not None else ()
    if len(provenance) + 1 > params.max_interactions:
        return []
    eps = hit_epsilon(grid.voxel_size)
    leg = reception.point - source
    leg_length = norm(leg)
    if leg_length < eps:
        return []
    incoming = leg / leg_length
    apex_distance = (parent.apex_distance if parent is not None else 0.0) + leg_length

    if ie.kind == IEKind.SURFACE_POINTS:
        hit = reception.hit
        if parent is not None:
            incoming = parent.direction
            spread = parent.spread
        else:
            spread = math.asin(min(1.0, ie.radius / apex_distance))
        node = Interaction(
            InteractionKind.REFLECTION, hit.position, ie.label, reception.ie_index, hit.normal
        )
        try:
            ray = reflect_ray(
                hit, incoming, params, eps,
                provenance=provenance + (node,),
                excluded=_exclusion_set(grid, reception.ie_index, hit.position, ie.label),
                apex_distance=apex_distance,
                spread=spread,
            )
        except BackFacingHitError as e:
            logger.debug(f"Dropped reception: {e}")
            return []
        return [ray]

    if ie.kind == IEKind.EDGE_SEGMENT:
        diffractions = parent.diffraction_count if parent is not None else 0
        if diffractions + 1 > params.max_diffractions:
            return []
        edge = scene.edges[ie.edge_index]
        node = Interaction(
            InteractionKind.DIFFRACTION, reception.point, ie.label, reception.ie_index,
            edge.direction, ie.edge_index,
        )
        spread = (parent.spread if parent is not None else 0.0) + math.asin(
            min(1.0, ie.radius / apex_distance)
        )
        return diffract_rays(
            EdgeHit(ie, reception.point, edge), incoming, params,
            provenance=provenance + (node,),
            excluded=_exclusion_set(grid, reception.ie_index, reception.point, None),
            spread=spread,
        )
    return []


def _trace_ray(grid: VoxelGrid, scene: Scene, params: TraceParams, ray: ConicalRay):
    return voxel_cone_trace(ray, grid, scene, params)


def propagate(
    tx: Radio,
    initial_hits: List[Reception],
    grid: VoxelGrid,
    scene: Scene,
    params: TraceParams,
    workers: int = 1,
) -> List[PathCandidate]:
    """
    Expand rays level by level from the initial hits until they stop meeting IEs
    or reach max_interactions; receiver receptions become candidates.
    """
    if params.max_interactions == 0:
        return []
    frontier: List[ConicalRay] = []
    for rec in initial_hits:
        frontier.extend(_spawn(rec, tx.position, None, grid, scene, params))

    candidates: List[PathCandidate] = []
    level = 1
    while frontier:
        frontier.sort(key=lambda r: r.sort_key())
        traced = ordered_map(_trace_ray, frontier, workers, shared=(grid, scene, params))
        next_frontier: List[ConicalRay] = []
        for ray, receptions in zip(frontier, traced):
            for rec in receptions:
                ie = grid.ies[rec.ie_index]
                if ie.kind == IEKind.RECEIVER:
                    candidates.append(
                        PathCandidate(
                            tx.id, ie.receiver_id, ray.provenance,
                            _coarse_length(tx, ray.provenance, rec.point),
                        )
                    )
                else:
                    next_frontier.extend(_spawn(rec, ray.origin, ray, grid, scene, params))
        logger.debug(f"Level {level}: {len(frontier)} rays, {len(candidates)} candidates so far")
        frontier = next_frontier
        level += 1

    capped = cap_by_label_sequence(candidates, params.kappa)
    logger.info(
        f"Propagation for {tx.id}: {len(candidates)} coarse paths, {len(capped)} after kappa cap"
    )
    return capped


def trace_transmitter(
    tx: Radio, grid: VoxelGrid, scene: Scene, params: TraceParams, workers: int = 1
) -> List[PathCandidate]:
    """Transmission plus propagation phase for one transmitter, canonically sorted."""
    los, initial = transmission_phase(tx, grid, scene, params, workers)
    paths = propagate(tx, initial, grid, scene, params, workers)
    return sorted(los, key=lambda c: c.sort_key()) + paths
