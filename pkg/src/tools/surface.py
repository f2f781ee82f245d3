"""
Surface tools for the point cloud ray launcher.

Covers: implicit point-set surface f(x) = (x - p(x)) . n(x) evaluated from an
IE's member points, sign-change ray marching over a subvoxel-sized segment,
and the local tangent frame used by path refinement.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..utils.vecmath import norm, normalize
from .scene import Scene
from .voxelgrid import IntersectableEntity

logger = logging.getLogger("pc-raylauncher.surface")

DEFAULT_STEP_BUDGET = 32
HIT_EPSILON_FACTOR = 1e-4
_BISECTION_LIMIT = 64


@dataclass(frozen=True, eq=False)
class SurfaceEstimate:
    query_x: np.ndarray
    p_bar: np.ndarray
    n_bar: np.ndarray
    sdf_value: float


@dataclass(frozen=True, eq=False)
class RayMarchState:
    s_current: np.ndarray
    segment_start: np.ndarray
    segment_end: np.ndarray
    steps_taken: int


@dataclass(frozen=True, eq=False)
class SurfaceHit:
    position: np.ndarray
    normal: np.ndarray
    label: int
    distance_along_ray: float
    ie_index: int = -1


def hit_epsilon(voxel_size: float) -> float:
    """Tolerance on |f_sdf| that counts as an intersection."""
    return HIT_EPSILON_FACTOR * voxel_size


def estimate_surface(
    x: np.ndarray, ie: IntersectableEntity, scene: Scene, bandwidth: Optional[float] = None
) -> SurfaceEstimate:
    """
    Gaussian-weighted average position and normal of the IE's points around x.

    The bandwidth defaults to the subvoxel edge length. When every weight
    underflows the nearest member point is used instead.
    """
    positions = scene.points.positions[ie.point_indices]
    normals = scene.points.normals[ie.point_indices]
    h = bandwidth if bandwidth is not None else ie.subvoxel_size

    offsets = positions - x
    d2 = np.einsum("ij,ij->i", offsets, offsets)
    weights = np.exp(-d2 / (h * h))
    total = float(weights.sum())

    n_sum = weights @ normals if total > 0.0 else None
    if total > 0.0 and np.isfinite(total) and norm(n_sum) > 1e-12:
        p_bar = (weights @ positions) / total
        n_bar = n_sum / norm(n_sum)
    else:
        nearest = int(np.argmin(d2))
        p_bar = positions[nearest].copy()
        n_bar = normalize(normals[nearest])

    return SurfaceEstimate(x, p_bar, n_bar, float(np.dot(x - p_bar, n_bar)))


def _bisect(
    origin: np.ndarray,
    direction: np.ndarray,
    lo: float,
    hi: float,
    f_lo: float,
    ie: IntersectableEntity,
    scene: Scene,
    epsilon_hit: float,
) -> Optional[Tuple[float, SurfaceEstimate]]:
    for _ in range(_BISECTION_LIMIT):
        mid = 0.5 * (lo + hi)
        est = estimate_surface(origin + mid * direction, ie, scene)
        if abs(est.sdf_value) <= epsilon_hit:
            return mid, est
        if np.sign(est.sdf_value) == np.sign(f_lo):
            lo, f_lo = mid, est.sdf_value
        else:
            hi = mid
    # a sign flip that never narrows to a root is a normal discontinuity, not a surface
    return None


def march_segment(
    origin: np.ndarray,
    direction: np.ndarray,
    ie: IntersectableEntity,
    scene: Scene,
    epsilon_hit: float,
    max_steps: int = DEFAULT_STEP_BUDGET,
    ie_index: int = -1,
) -> Optional[SurfaceHit]:
    """
    Sphere-trace the IE's implicit surface along a segment one subvoxel diameter
    long, centered on the projection of the subvoxel center onto the ray.
    """
    t_center = float(np.dot(ie.center - origin, direction))
    t_end = t_center + ie.radius
    if t_end <= 0.0:
        return None
    t = max(t_center - ie.radius, 0.0)
    state = RayMarchState(origin + t * direction, origin + t * direction, origin + t_end * direction, 0)
    est = estimate_surface(state.s_current, ie, scene)

    while state.steps_taken < max_steps:
        f = est.sdf_value
        if abs(f) < epsilon_hit:
            return SurfaceHit(state.s_current, est.n_bar, ie.label, t, ie_index)
        if t >= t_end:
            return None
        t_next = min(t + abs(f), t_end)
        est_next = estimate_surface(origin + t_next * direction, ie, scene)
        if np.sign(est_next.sdf_value) != np.sign(f) and est_next.sdf_value != 0.0:
            found = _bisect(origin, direction, t, t_next, f, ie, scene, epsilon_hit)
            if found is None:
                return None
            t_hit, est_hit = found
            return SurfaceHit(origin + t_hit * direction, est_hit.n_bar, ie.label, t_hit, ie_index)
        t, est = t_next, est_next
        state = RayMarchState(
            origin + t * direction, state.segment_start, state.segment_end, state.steps_taken + 1
        )

    logger.debug(f"Step budget exhausted on IE label {ie.label}")
    return None


def hit_in_sphere(hit: SurfaceHit, ie: IntersectableEntity, slack: float = 1e-9) -> bool:
    """True when a hit belongs to the IE's bounding sphere."""
    return norm(hit.position - ie.center) <= ie.radius + slack


def local_frame(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tangent vectors (u, v) with {u, v, n} right-handed orthonormal.

    u = normalize(a x n) where a is the coordinate axis least aligned with n.
    Ties are broken from the dominant axis m: a = e[(m+2)%3] if n[m] > 0,
    else e[(m+1)%3].
    """
    n = np.asarray(normal, dtype=np.float64)
    mags = np.abs(n)
    dominant = int(np.argmax(mags))
    least = float(mags.min())
    tied = [i for i in range(3) if i != dominant and abs(mags[i] - least) <= 1e-12]
    if len(tied) > 1:
        pick = (dominant + 2) % 3 if n[dominant] > 0 else (dominant + 1) % 3
    else:
        pick = int(np.argmin(mags))
    axis = np.zeros(3)
    axis[pick] = 1.0
    u = normalize(np.cross(axis, n))
    v = np.cross(n, u)
    return u, v
