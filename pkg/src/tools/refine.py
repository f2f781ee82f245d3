"""
Path refinement tools for the point cloud ray launcher.

Covers: gradient descent on total path length with surface reprojection,
LOS conversion, duplicate removal by label chains and by first Fresnel zone
containment, and the reflection law / Keller condition check.
"""

import dataclasses
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import DegenerateSegmentError, InvalidParameterError
from ..utils.parallel import ordered_map
from ..utils.vecmath import angle_between, norm, normalize, reflect, rounded_key
from .scene import SPEED_OF_LIGHT, Scene
from .surface import estimate_surface, hit_epsilon, hit_in_sphere, local_frame, march_segment
from .tracer import InteractionKind, PathCandidate, segment_visible
from .voxelgrid import VoxelGrid

logger = logging.getLogger("pc-raylauncher.refine")

_DEGENERATE_LENGTH = 1e-9
# Length increase tolerated when accepting a descent step.
_LENGTH_SLACK = 1e-9


class RejectionReason(str, Enum):
    RAY_MISSED = "ray_missed"
    NOT_CONVERGED = "not_converged"
    OCCLUDED = "occluded"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class Rejection:
    reason: RejectionReason
    detail: str = ""


@dataclass(frozen=True)
class RefineParams:
    delta: float = 1e-4
    rho: int = 2000
    step_size: float = 0.5
    fresnel_enabled: bool = True
    max_halvings: int = 8
    skip_near_refined: bool = True

    def __post_init__(self):
        if self.delta <= 0:
            raise InvalidParameterError("delta", "> 0")
        if self.rho < 1:
            raise InvalidParameterError("rho", ">= 1")
        if self.step_size <= 0:
            raise InvalidParameterError("step_size", "> 0")
        if self.max_halvings < 0:
            raise InvalidParameterError("max_halvings", ">= 0")


@dataclass(frozen=True, eq=False)
class ReflectionNode:
    c: np.ndarray
    u: np.ndarray
    v: np.ndarray
    n: np.ndarray
    label: int
    r: float = 0.0
    s: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return self.c + self.r * self.u + self.s * self.v


@dataclass(frozen=True, eq=False)
class DiffractionNode:
    c: np.ndarray
    w: np.ndarray
    t: float
    t_min: float
    t_max: float
    label: int

    @property
    def position(self) -> np.ndarray:
        return self.c + self.t * self.w


RefineNode = Union[ReflectionNode, DiffractionNode]


@dataclass(frozen=True, eq=False)
class PathNode:
    """A refined interaction; ``axis`` is the surface normal or the edge direction."""

    kind: InteractionKind
    position: np.ndarray
    label: int
    axis: np.ndarray


@dataclass(frozen=True, eq=False)
class ExactPath:
    tx_id: str
    rx_id: str
    tx_position: np.ndarray
    rx_position: np.ndarray
    nodes: Tuple[PathNode, ...]
    total_length: float
    converged: bool = True
    gradient_norm: float = 0.0

    @property
    def delay(self) -> float:
        return self.total_length / SPEED_OF_LIGHT

    @property
    def label_chain(self) -> Tuple[int, ...]:
        return tuple(n.label for n in self.nodes)

    @property
    def kind_sequence(self) -> Tuple[str, ...]:
        return tuple(n.kind.value for n in self.nodes)

    @property
    def points(self) -> List[np.ndarray]:
        return [self.tx_position] + [n.position for n in self.nodes] + [self.rx_position]

    def chain_key(self) -> tuple:
        return (self.tx_id, self.rx_id, self.kind_sequence, self.label_chain)

    def position_key(self) -> tuple:
        return tuple(rounded_key(n.position) for n in self.nodes)

    def sort_key(self) -> tuple:
        return (self.tx_id, self.rx_id, round(self.delay, 18), self.position_key())


@dataclass
class RefineResult:
    paths: List[ExactPath]
    rejections: Dict[str, int]
    skipped: int = 0


def path_length(points: Sequence[np.ndarray]) -> float:
    return float(sum(norm(b - a) for a, b in zip(points[:-1], points[1:])))


# ==================== Gradients ====================


def local_gradients(
    start: np.ndarray, nodes: Sequence[RefineNode], end: np.ndarray
) -> List[np.ndarray]:
    """
    Analytic partials of the total length per node: (d/dr, d/ds) for
    reflections, (d/dt,) for diffractions.
    """
    points = [start] + [n.position for n in nodes] + [end]
    grads = []
    for k, node in enumerate(nodes, start=1):
        to_prev = points[k] - points[k - 1]
        to_next = points[k] - points[k + 1]
        d_prev, d_next = norm(to_prev), norm(to_next)
        if d_prev < _DEGENERATE_LENGTH or d_next < _DEGENERATE_LENGTH:
            raise DegenerateSegmentError(k)
        e_sum = to_prev / d_prev + to_next / d_next
        if isinstance(node, ReflectionNode):
            grads.append(np.array([np.dot(node.u, e_sum), np.dot(node.v, e_sum)]))
        else:
            grads.append(np.array([np.dot(node.w, e_sum)]))
    return grads


def _gradient_norm(grads: List[np.ndarray]) -> float:
    return float(np.linalg.norm(np.concatenate(grads))) if grads else 0.0


# ==================== Node updates ====================


def _initial_nodes(candidate: PathCandidate, scene: Scene) -> List[RefineNode]:
    nodes: List[RefineNode] = []
    for inter in candidate.interactions:
        if inter.kind == InteractionKind.REFLECTION:
            u, v = local_frame(inter.normal)
            nodes.append(ReflectionNode(inter.position, u, v, inter.normal, inter.label))
        else:
            edge = scene.edges[inter.edge_index]
            t = float(np.dot(inter.position - edge.start, edge.direction))
            nodes.append(
                DiffractionNode(
                    edge.start, edge.direction, min(max(t, 0.0), edge.length),
                    0.0, edge.length, inter.label,
                )
            )
    return nodes


def _step(nodes: Sequence[RefineNode], grads: List[np.ndarray], step: float) -> List[RefineNode]:
    moved = []
    for node, g in zip(nodes, grads):
        if isinstance(node, ReflectionNode):
            moved.append(dataclasses.replace(node, r=node.r - step * g[0], s=node.s - step * g[1]))
        else:
            t = min(max(node.t - step * g[0], node.t_min), node.t_max)
            moved.append(dataclasses.replace(node, t=t))
    return moved


def _reproject(
    start: np.ndarray, nodes: Sequence[RefineNode], grid: VoxelGrid, scene: Scene
) -> Optional[List[RefineNode]]:
    """
    Snap every moved reflection point back onto the point-set surface by
    marching from the previous node toward it, then polishing the hit onto
    the zero level. None when a ray misses.
    """
    eps = hit_epsilon(grid.voxel_size)
    radius = 2.0 * grid.subvoxel_diameter
    previous = start
    snapped: List[RefineNode] = []
    for node in nodes:
        if isinstance(node, DiffractionNode):
            snapped.append(node)
            previous = node.position
            continue
        target = node.position
        offset = target - previous
        if norm(offset) < _DEGENERATE_LENGTH:
            return None
        direction = offset / norm(offset)
        best_same = best_any = None
        for idx in grid.surface_ies_near(target, radius):
            ie = grid.ies[idx]
            hit = march_segment(previous, direction, ie, scene, eps, ie_index=idx)
            if hit is None or not hit_in_sphere(hit, ie):
                continue
            entry = (norm(hit.position - target), idx, hit)
            if ie.label == node.label and (best_same is None or entry[:2] < best_same[:2]):
                best_same = entry
            if best_any is None or entry[:2] < best_any[:2]:
                best_any = entry
        chosen = best_same or best_any
        if chosen is None:
            return None
        position, normal = _polish(previous, direction, chosen[2], grid.ies[chosen[1]], scene)
        u, v = local_frame(normal)
        snapped.append(ReflectionNode(position, u, v, normal, chosen[2].label))
        previous = position
    return snapped


def _polish(
    origin: np.ndarray, direction: np.ndarray, hit, ie, scene: Scene
) -> Tuple[np.ndarray, np.ndarray]:
    """One Newton step along the ray onto the zero level; exact for planar patches."""
    est = estimate_surface(hit.position, ie, scene)
    denom = float(np.dot(direction, est.n_bar))
    if abs(denom) < 1e-6:
        return hit.position, hit.normal
    position = hit.position - (est.sdf_value / denom) * direction
    if norm(position - hit.position) > ie.radius or np.dot(position - origin, direction) <= 0:
        return hit.position, hit.normal
    return position, est.n_bar


# ==================== Final checks ====================


def _legs_visible(
    points: List[np.ndarray], nodes: Sequence[RefineNode], grid: VoxelGrid, scene: Scene
) -> bool:
    eps = hit_epsilon(grid.voxel_size)
    exempt_of = [None] + [
        (n.position, n.label if isinstance(n, ReflectionNode) else None) for n in nodes
    ] + [None]
    for k in range(len(points) - 1):
        exempt = [e for e in (exempt_of[k], exempt_of[k + 1]) if e is not None]
        if not segment_visible(points[k], points[k + 1], grid, scene, eps, exempt=exempt):
            return False
    return True


def _facing_ok(points: List[np.ndarray], nodes: Sequence[RefineNode]) -> bool:
    for k, node in enumerate(nodes, start=1):
        if isinstance(node, ReflectionNode):
            x = points[k]
            if np.dot(points[k - 1] - x, node.n) <= 0 or np.dot(points[k + 1] - x, node.n) <= 0:
                return False
    return True


def _to_path_nodes(nodes: Sequence[RefineNode]) -> Tuple[PathNode, ...]:
    out = []
    for node in nodes:
        if isinstance(node, ReflectionNode):
            out.append(PathNode(InteractionKind.REFLECTION, node.position, node.label, node.n))
        else:
            out.append(PathNode(InteractionKind.DIFFRACTION, node.position, node.label, node.w))
    return tuple(out)


# ==================== Refinement ====================


def los_path(candidate: PathCandidate, scene: Scene) -> ExactPath:
    tx = scene.transmitter(candidate.tx_id).position
    rx = scene.receiver(candidate.rx_id).position
    return ExactPath(candidate.tx_id, candidate.rx_id, tx, rx, (), norm(rx - tx), True, 0.0)


def refine_path(
    candidate: PathCandidate, grid: VoxelGrid, scene: Scene, params: RefineParams
) -> Union[ExactPath, Rejection]:
    """
    Minimize total length over the candidate's interaction unknowns.

    Each iteration steps against the gradient, halving the step while the
    length grows, then reprojects reflection points onto the surface and
    resets their tangent frames.
    """
    if not candidate.interactions:
        return los_path(candidate, scene)
    start = scene.transmitter(candidate.tx_id).position
    end = scene.receiver(candidate.rx_id).position
    nodes = _initial_nodes(candidate, scene)

    def length_of(ns):
        return path_length([start] + [n.position for n in ns] + [end])

    f = length_of(nodes)
    gnorm = float("inf")
    try:
        for _ in range(params.rho):
            grads = local_gradients(start, nodes, end)
            gnorm = _gradient_norm(grads)
            if gnorm < params.delta:
                break
            step = params.step_size
            accepted = None
            missed = 0
            for _attempt in range(params.max_halvings + 1):
                trial = _reproject(start, _step(nodes, grads, step), grid, scene)
                if trial is None:
                    missed += 1
                elif length_of(trial) <= f + _LENGTH_SLACK:
                    accepted = trial
                    break
                step *= 0.5
            if accepted is None:
                if missed == params.max_halvings + 1:
                    return Rejection(RejectionReason.RAY_MISSED, f"gradient norm {gnorm:.3g}")
                break
            nodes = accepted
            f = length_of(nodes)
        else:
            gnorm = _gradient_norm(local_gradients(start, nodes, end))
    except DegenerateSegmentError as e:
        return Rejection(RejectionReason.DEGENERATE, str(e))

    if gnorm >= params.delta:
        return Rejection(RejectionReason.NOT_CONVERGED, f"gradient norm {gnorm:.3g}")

    points = [start] + [n.position for n in nodes] + [end]
    if not _facing_ok(points, nodes):
        return Rejection(RejectionReason.OCCLUDED, "neighbor behind reflecting surface")
    if not _legs_visible(points, nodes, grid, scene):
        return Rejection(RejectionReason.OCCLUDED, "leg blocked")

    return ExactPath(
        candidate.tx_id, candidate.rx_id, start, end,
        _to_path_nodes(nodes), path_length(points), True, gnorm,
    )


def _covered(candidate: PathCandidate, found: List[ExactPath], radius: float) -> bool:
    """True when every coarse point sits near the matching node of an already refined path."""
    for path in found:
        if len(path.nodes) != len(candidate.interactions):
            continue
        if all(
            norm(i.position - n.position) <= radius
            for i, n in zip(candidate.interactions, path.nodes)
        ):
            return True
    return False


def _refine_chain(
    grid: VoxelGrid, scene: Scene, params: RefineParams, members: List[PathCandidate]
) -> Tuple[List[ExactPath], Counter, int]:
    """Refine one label chain in coarse-length order, skipping covered candidates."""
    radius = 2.0 * grid.subvoxel_diameter
    found: List[ExactPath] = []
    reasons: Counter = Counter()
    skipped = 0
    for cand in sorted(members, key=lambda c: (c.coarse_length, c.sort_key())):
        if params.skip_near_refined and _covered(cand, found, radius):
            skipped += 1
            continue
        result = refine_path(cand, grid, scene, params)
        if isinstance(result, Rejection):
            reasons[result.reason.value] += 1
            logger.debug(f"Rejected {cand.chain_key()}: {result.reason.value} {result.detail}")
        else:
            found.append(result)
    return found, reasons, skipped


def refine_candidates(
    candidates: List[PathCandidate],
    grid: VoxelGrid,
    scene: Scene,
    params: RefineParams,
    workers: int = 1,
) -> RefineResult:
    """
    Refine every candidate; chains run in parallel, candidates within a chain
    run in coarse-length order.
    """
    chains: Dict[tuple, List[PathCandidate]] = defaultdict(list)
    for cand in sorted(candidates, key=lambda c: c.sort_key()):
        chains[cand.chain_key()].append(cand)

    outcomes = ordered_map(
        _refine_chain, list(chains.values()), workers, shared=(grid, scene, params)
    )

    paths: List[ExactPath] = []
    rejections: Counter = Counter()
    skipped = 0
    for found, reasons, skip in outcomes:
        paths.extend(found)
        rejections.update(reasons)
        skipped += skip
    paths.sort(key=lambda p: p.sort_key())
    logger.info(
        f"Refined {len(candidates)} candidates: {len(paths)} exact, "
        f"{sum(rejections.values())} rejected, {skipped} skipped"
    )
    return RefineResult(paths, dict(sorted(rejections.items())), skipped)


# ==================== Duplicate removal ====================


def dedup_by_label(paths: List[ExactPath]) -> List[ExactPath]:
    """Shortest path per (tx, rx, kinds, labels); ties go to the lexicographically smaller positions."""
    best: Dict[tuple, ExactPath] = {}
    for path in paths:
        key = path.chain_key()
        current = best.get(key)
        if current is None or (path.total_length, path.position_key()) < (
            current.total_length, current.position_key()
        ):
            best[key] = path
    return sorted(best.values(), key=lambda p: p.sort_key())


def _inside_fresnel(candidate: ExactPath, kept: ExactPath, wavelength: float) -> bool:
    """Every node of candidate inside the first Fresnel zone of the kept path's leg ending at that node."""
    kept_points = kept.points
    for k, node in enumerate(candidate.nodes, start=1):
        a, x = kept_points[k - 1], kept_points[k]
        q = node.position
        if norm(q - a) + norm(q - x) > norm(x - a) + 0.5 * wavelength:
            return False
    return True



def dedup_by_fresnel(paths: List[ExactPath], carrier_frequency: float) -> List[ExactPath]:
    """
    Walk paths by increasing delay; drop a path when each of its interaction
    points lies in the first Fresnel ellipsoid of the kept path leg that ends at
    the matching node.
    """
    wavelength = SPEED_OF_LIGHT / carrier_frequency
    kept: List[ExactPath] = []
    for path in sorted(paths, key=lambda p: (p.delay, p.position_key())):
        duplicate = any(
            other.tx_id == path.tx_id
            and other.rx_id == path.rx_id
            and other.kind_sequence == path.kind_sequence
            and _inside_fresnel(path, other, wavelength)
            for other in kept
        )
        if not duplicate:
            kept.append(path)
    return sorted(kept, key=lambda p: p.sort_key())


def verify_reflection_law(path: ExactPath, tolerance: float) -> bool:
    points = path.points
    for k, node in enumerate(path.nodes, start=1):
        incoming = normalize(points[k] - points[k - 1])
        outgoing = normalize(points[k + 1] - points[k])
        if node.kind == InteractionKind.REFLECTION:
            if angle_between(reflect(incoming, node.axis), outgoing) > tolerance:
                return False
        elif abs(float(np.dot(incoming, node.axis)) - float(np.dot(outgoing, node.axis))) > tolerance:
            return False
    return True
