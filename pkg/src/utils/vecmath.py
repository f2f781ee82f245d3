"""Small vector helpers shared by the geometric kernels."""

import numpy as np

EPS = 1e-12


def vec3(value) -> np.ndarray:
    """Coerce to a float64 3-vector."""
    arr = np.asarray(value, dtype=np.float64).reshape(3)
    return arr


def norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.dot(v, v)))


def normalize(v: np.ndarray) -> np.ndarray:
    length = norm(v)
    if length < EPS:
        raise ValueError("cannot normalize a zero-length vector")
    return v / length


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in radians between two non-zero vectors, robust near 0 and pi."""
    a = normalize(a)
    b = normalize(b)
    # atan2 form keeps precision for nearly parallel vectors
    return float(np.arctan2(norm(np.cross(a, b)), float(np.dot(a, b))))


def reflect(direction: np.ndarray, normal: np.ndarray) -> np.ndarray:
    return direction - 2.0 * float(np.dot(direction, normal)) * normal


def rounded_key(v: np.ndarray, digits: int = 9) -> tuple:
    """Hashable, order-stable key for a vector."""
    return tuple(round(float(x), digits) for x in v)
