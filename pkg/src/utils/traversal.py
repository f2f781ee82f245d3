"""
Grid traversal helpers.

walk_voxels is the incremental voxel walk (Amanatides & Woo): it visits every
voxel a segment passes through, in order, without skipping corners.
"""

from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

Index3 = Tuple[int, int, int]


def clip_to_box(
    a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray
) -> Optional[Tuple[float, float]]:
    """Parametric range [t0, t1] of segment a->b inside the box, or None."""
    d = b - a
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        if abs(d[axis]) < 1e-15:
            if a[axis] < lo[axis] or a[axis] > hi[axis]:
                return None
            continue
        ta = (lo[axis] - a[axis]) / d[axis]
        tb = (hi[axis] - a[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    return t0, t1


def walk_voxels(
    origin: np.ndarray,
    dims: Sequence[int],
    voxel_size: float,
    a: np.ndarray,
    b: np.ndarray,
) -> Iterator[Index3]:
    """Yield the voxels crossed by segment a->b, clipped to the grid."""
    dims_arr = np.asarray(dims, dtype=np.int64)
    upper = origin + dims_arr * voxel_size
    clipped = clip_to_box(a, b, origin, upper)
    if clipped is None:
        return
    t0, t1 = clipped
    p = (a + t0 * (b - a) - origin) / voxel_size
    q = (a + t1 * (b - a) - origin) / voxel_size
    span = q - p

    cur = np.clip(np.floor(p).astype(np.int64), 0, dims_arr - 1)
    step = np.sign(span).astype(np.int64)
    t_max = np.full(3, np.inf)
    t_delta = np.full(3, np.inf)
    for axis in range(3):
        if step[axis] == 0:
            continue
        boundary = cur[axis] + 1 if step[axis] > 0 else cur[axis]
        t_max[axis] = (boundary - p[axis]) / span[axis]
        t_delta[axis] = 1.0 / abs(span[axis])

    yield (int(cur[0]), int(cur[1]), int(cur[2]))
    budget = int(dims_arr.sum()) + 3
    for _ in range(budget):
        axis = int(np.argmin(t_max))
        if t_max[axis] > 1.0:
            break
        cur[axis] += step[axis]
        if cur[axis] < 0 or cur[axis] >= dims_arr[axis]:
            break
        t_max[axis] += t_delta[axis]
        yield (int(cur[0]), int(cur[1]), int(cur[2]))
