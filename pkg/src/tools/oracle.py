"""
Analytic reference tools for planar scenes.

Covers: finite rectangles and straight edges, image-method reflection paths
up to third order, Fermat diffraction points, path matching with a direction
tolerance, stratified point sampling and ready-made test scenes.
"""

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import InvalidParameterError, SceneFormatError
from ..utils.vecmath import angle_between, norm, normalize, vec3
from .refine import ExactPath, PathNode, path_length
from .scene import DiffractionEdge, LabeledPointCloud, Radio, RadioKind, Scene
from .tracer import InteractionKind

logger = logging.getLogger("pc-raylauncher.oracle")

MAX_IMAGE_ORDER = 3
_SEGMENT_TOLERANCE = 1e-9
_FERMAT_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class Rectangle:
    corner: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    label: int

    def __post_init__(self):
        for name in ("corner", "e1", "e2"):
            object.__setattr__(self, name, vec3(getattr(self, name)))
        object.__setattr__(self, "label", int(self.label))
        l1, l2 = norm(self.e1), norm(self.e2)
        if l1 < 1e-12 or l2 < 1e-12:
            raise InvalidParameterError("rectangle", "non-degenerate edge vectors")
        if abs(float(np.dot(self.e1, self.e2))) > 1e-9 * l1 * l2:
            raise InvalidParameterError("rectangle", "orthogonal edge vectors")

    @property
    def normal(self) -> np.ndarray:
        return normalize(np.cross(self.e1, self.e2))

    @property
    def area(self) -> float:
        return norm(self.e1) * norm(self.e2)

    def contains(self, p: np.ndarray, tolerance: float = 1e-9) -> bool:
        rel = p - self.corner
        a = float(np.dot(rel, self.e1)) / float(np.dot(self.e1, self.e1))
        b = float(np.dot(rel, self.e2)) / float(np.dot(self.e2, self.e2))
        return -tolerance <= a <= 1.0 + tolerance and -tolerance <= b <= 1.0 + tolerance

    def mirror(self, p: np.ndarray) -> np.ndarray:
        n = self.normal
        return p - 2.0 * float(np.dot(p - self.corner, n)) * n

    def plane_intersection(self, a: np.ndarray, b: np.ndarray) -> Optional[Tuple[float, np.ndarray]]:
        """Parameter and point where line a->b meets the rectangle's plane."""
        n = self.normal
        denom = float(np.dot(b - a, n))
        if abs(denom) < 1e-15:
            return None
        t = float(np.dot(self.corner - a, n)) / denom
        return t, a + t * (b - a)

    def blocks(self, a: np.ndarray, b: np.ndarray) -> bool:
        """True when the open segment a->b crosses the rectangle."""
        found = self.plane_intersection(a, b)
        if found is None:
            return False
        t, p = found
        if not _SEGMENT_TOLERANCE < t < 1.0 - _SEGMENT_TOLERANCE:
            return False
        return self.contains(p)


@dataclass(frozen=True, eq=False)
class PlanarScene:
    rectangles: Tuple[Rectangle, ...]
    edges: Tuple[DiffractionEdge, ...] = ()
    tx: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rx: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        object.__setattr__(self, "rectangles", tuple(self.rectangles))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "tx", vec3(self.tx))
        object.__setattr__(self, "rx", vec3(self.rx))


def _visible(scene: PlanarScene, a: np.ndarray, b: np.ndarray) -> bool:
    return not any(rect.blocks(a, b) for rect in scene.rectangles)


# ==================== Image Method ====================


def _reflection_chain(
    scene: PlanarScene, sequence: Sequence[int]
) -> Optional[List[np.ndarray]]:
    rects = [scene.rectangles[i] for i in sequence]
    images = [None] * len(rects)
    target = scene.rx
    for k in range(len(rects) - 1, -1, -1):
        target = rects[k].mirror(target)
        images[k] = target

    points = []
    previous = scene.tx
    for k, rect in enumerate(rects):
        found = rect.plane_intersection(previous, images[k])
        if found is None:
            return None
        t, p = found
        if not _SEGMENT_TOLERANCE < t < 1.0 - _SEGMENT_TOLERANCE or not rect.contains(p):
            return None
        points.append(p)
        previous = p

    full = [scene.tx] + points + [scene.rx]
    for k, rect in enumerate(rects, start=1):
        n = rect.normal
        if np.dot(full[k - 1] - full[k], n) <= 0 or np.dot(full[k + 1] - full[k], n) <= 0:
            return None
    for a, b in zip(full[:-1], full[1:]):
        if not _visible(scene, a, b):
            return None
    return points


def image_method_paths(
    scene: PlanarScene, max_order: int, tx_id: str = "tx0", rx_id: str = "rx0"
) -> List[ExactPath]:
    """Every unoccluded specular path with at most max_order reflections, LOS included."""
    if not 0 <= max_order <= MAX_IMAGE_ORDER:
        raise InvalidParameterError("max_order", f"in [0, {MAX_IMAGE_ORDER}]")
    paths = []
    if _visible(scene, scene.tx, scene.rx):
        paths.append(
            ExactPath(tx_id, rx_id, scene.tx, scene.rx, (), norm(scene.rx - scene.tx))
        )
    count = len(scene.rectangles)
    for order in range(1, max_order + 1):
        for sequence in itertools.product(range(count), repeat=order):
            if any(a == b for a, b in zip(sequence[:-1], sequence[1:])):
                continue
            points = _reflection_chain(scene, sequence)
            if points is None:
                continue
            nodes = tuple(
                PathNode(
                    InteractionKind.REFLECTION, p,
                    scene.rectangles[i].label, scene.rectangles[i].normal,
                )
                for p, i in zip(points, sequence)
            )
            length = path_length([scene.tx] + points + [scene.rx])
            paths.append(ExactPath(tx_id, rx_id, scene.tx, scene.rx, nodes, length))
    paths.sort(key=lambda p: p.sort_key())
    logger.debug(f"Image method up to order {max_order}: {len(paths)} paths")
    return paths


# ==================== Diffraction ====================


def fermat_diffraction_point(edge: DiffractionEdge, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimizer of |q-a| + |q-b| over the closed edge segment (ternary search)."""
    a, b = vec3(a), vec3(b)
    lo, hi = 0.0, edge.length

    def f(t: float) -> float:
        q = edge.point_at(t)
        return norm(q - a) + norm(q - b)

    for _ in range(200):
        if hi - lo <= _FERMAT_TOLERANCE:
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) <= f(m2):
            hi = m2
        else:
            lo = m1
    return edge.point_at(0.5 * (lo + hi))


def single_diffraction_paths(
    scene: PlanarScene, tx_id: str = "tx0", rx_id: str = "rx0"
) -> List[ExactPath]:
    """One path per edge whose Fermat point is interior, exterior-lit and visible from both ends."""
    paths = []
    for edge in scene.edges:
        q = fermat_diffraction_point(edge, scene.tx, scene.rx)
        t = float(np.dot(q - edge.start, edge.direction))
        if t <= 1e-6 or t >= edge.length - 1e-6:
            continue
        incoming = q - scene.tx
        outgoing = scene.rx - q
        if norm(incoming) < 1e-12 or norm(outgoing) < 1e-12:
            continue
        if not edge.is_exterior_for(normalize(incoming)) or edge.enters_solid(normalize(outgoing)):
            continue
        if not (_visible(scene, scene.tx, q) and _visible(scene, q, scene.rx)):
            continue
        node = PathNode(InteractionKind.DIFFRACTION, q, edge.label, edge.direction)
        paths.append(
            ExactPath(
                tx_id, rx_id, scene.tx, scene.rx, (node,),
                norm(incoming) + norm(outgoing),
            )
        )
    paths.sort(key=lambda p: p.sort_key())
    return paths


# ==================== Matching ====================


@dataclass
class MatchReport:
    matched: List[bool]
    assignment: List[Optional[int]]
    max_position_error: float = 0.0

    @property
    def matched_count(self) -> int:
        return sum(self.matched)

    @property
    def percent_matched(self) -> float:
        if not self.matched:
            return 100.0
        return 100.0 * self.matched_count / len(self.matched)

    def to_dict(self) -> dict:
        return {
            "reference_paths": len(self.matched),
            "matched": self.matched_count,
            "percent_matched": self.percent_matched,
            "max_position_error_m": self.max_position_error,
        }


def _max_direction_deviation(a: ExactPath, b: ExactPath) -> float:
    pa, pb = a.points, b.points
    worst = 0.0
    for k in range(len(pa) - 1):
        da, db = pa[k + 1] - pa[k], pb[k + 1] - pb[k]
        if norm(da) < 1e-12 or norm(db) < 1e-12:
            return math.pi
        worst = max(worst, angle_between(da, db))
    return worst


def match_paths(
    found: List[ExactPath], reference: List[ExactPath], angle_tol: float
) -> MatchReport:
    """
    Greedy one-to-one matching in delay order. A found path matches a reference
    with the same endpoints and kind sequence when every segment direction
    deviates by less than angle_tol; the smallest deviation wins.
    """
    found_order = sorted(range(len(found)), key=lambda i: (found[i].delay, i))
    ref_order = sorted(range(len(reference)), key=lambda i: (reference[i].delay, i))
    used = set()
    matched = [False] * len(reference)
    assignment: List[Optional[int]] = [None] * len(reference)
    max_error = 0.0
    for r in ref_order:
        ref = reference[r]
        best = None
        for i in found_order:
            if i in used:
                continue
            cand = found[i]
            if (cand.tx_id, cand.rx_id, cand.kind_sequence) != (ref.tx_id, ref.rx_id, ref.kind_sequence):
                continue
            deviation = _max_direction_deviation(cand, ref)
            if deviation < angle_tol and (best is None or deviation < best[0]):
                best = (deviation, i)
        if best is None:
            continue
        used.add(best[1])
        matched[r] = True
        assignment[r] = best[1]
        for n_found, n_ref in zip(found[best[1]].nodes, ref.nodes):
            max_error = max(max_error, norm(n_found.position - n_ref.position))
    return MatchReport(matched, assignment, max_error)


# ==================== Sampling and builders ====================


def sample_planar_scene(scene: PlanarScene, density: float, seed: int = 0) -> LabeledPointCloud:
    """Jittered stratified samples on every rectangle, carrying its normal and label."""
    if density <= 0:
        raise InvalidParameterError("density", "> 0")
    rng = np.random.default_rng(seed)
    root = math.sqrt(density)
    positions, normals, labels = [], [], []
    for rect in scene.rectangles:
        nu = max(1, int(round(norm(rect.e1) * root)))
        nv = max(1, int(round(norm(rect.e2) * root)))
        iu, iv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
        jitter = rng.random((nu * nv, 2))
        a = (iu.reshape(-1) + jitter[:, 0]) / nu
        b = (iv.reshape(-1) + jitter[:, 1]) / nv
        positions.append(rect.corner + a[:, None] * rect.e1 + b[:, None] * rect.e2)
        normals.append(np.tile(rect.normal, (nu * nv, 1)))
        labels.append(np.full(nu * nv, rect.label, dtype=np.uint32))
    if not positions:
        return LabeledPointCloud.empty()
    return LabeledPointCloud(
        np.concatenate(positions), np.concatenate(normals), np.concatenate(labels)
    )


def box_room(
    size: Sequence[float] = (4.0, 3.0, 2.5),
    tx: Sequence[float] = (1.1, 1.2, 1.3),
    rx: Sequence[float] = (2.9, 1.9, 1.1),
) -> PlanarScene:
    """Closed box with inward-facing walls labelled 1..6."""
    length, width, height = (float(s) for s in size)
    x, y, z = np.eye(3)
    rects = (
        Rectangle((0, 0, 0), length * x, width * y, 1),
        Rectangle((0, 0, height), width * y, length * x, 2),
        Rectangle((0, 0, 0), height * z, length * x, 3),
        Rectangle((0, width, 0), length * x, height * z, 4),
        Rectangle((0, 0, 0), width * y, height * z, 5),
        Rectangle((length, 0, 0), height * z, width * y, 6),
    )
    return PlanarScene(rects, (), tx, rx)


def corridor(
    length: float = 12.0,
    width: float = 2.0,
    height: float = 2.5,
    tx: Sequence[float] = (1.0, 0.8, 1.4),
    rx: Sequence[float] = (10.5, 1.3, 1.2),
) -> PlanarScene:
    """Open-ended corridor along x: floor, ceiling and two side walls."""
    x, y, z = np.eye(3)
    rects = (
        Rectangle((0, 0, 0), length * x, width * y, 1),
        Rectangle((0, 0, height), width * y, length * x, 2),
        Rectangle((0, 0, 0), height * z, length * x, 3),
        Rectangle((0, width, 0), length * x, height * z, 4),
    )
    return PlanarScene(rects, (), tx, rx)


def screen_with_edge(
    tx: Sequence[float] = (0.0, -1.0, -1.0),
    rx: Sequence[float] = (0.0, 1.5, 0.5),
    edge_label: int = 100,
) -> PlanarScene:
    """
    Two faces meeting at an exterior edge along x through the origin: a top
    face (z = 0, y in [0, 2]) and a front face (y = 0, z in [-2, 0]). The
    default TX and RX see each other only around the edge.
    """
    top = Rectangle((-1, 0, 0), (2, 0, 0), (0, 2, 0), 1)
    front = Rectangle((-1, 0, -2), (2, 0, 0), (0, 0, 2), 2)
    edge = DiffractionEdge((-1, 0, 0), (1, 0, 0), (0, 0, 1), (0, -1, 0), edge_label)
    return PlanarScene((top, front), (edge,), tx, rx)


BUILDERS = {
    "box_room": box_room,
    "corridor": corridor,
    "screen_with_edge": screen_with_edge,
}


def to_scene(
    planar: PlanarScene,
    cloud: LabeledPointCloud,
    carrier_frequency: float = 60e9,
    tx_id: str = "tx0",
    rx_id: str = "rx0",
) -> Scene:
    return Scene(
        points=cloud,
        edges=planar.edges,
        transmitters=(Radio(RadioKind.TX, planar.tx, tx_id),),
        receivers=(Radio(RadioKind.RX, planar.rx, rx_id),),
        carrier_frequency=carrier_frequency,
    )


# ==================== JSON ====================


def _edge_record(edge: DiffractionEdge) -> dict:
    return {
        "start": edge.start.tolist(),
        "end": edge.end.tolist(),
        "normal_a": edge.normal_a.tolist(),
        "normal_b": edge.normal_b.tolist(),
        "label": edge.label,
    }


def planar_scene_to_dict(scene: PlanarScene) -> dict:
    return {
        "rectangles": [
            {"corner": r.corner.tolist(), "e1": r.e1.tolist(), "e2": r.e2.tolist(), "label": r.label}
            for r in scene.rectangles
        ],
        "edges": [_edge_record(e) for e in scene.edges],
        "tx": scene.tx.tolist(),
        "rx": scene.rx.tolist(),
    }


def planar_scene_from_dict(data: dict) -> PlanarScene:
    try:
        rects = tuple(
            Rectangle(r["corner"], r["e1"], r["e2"], r["label"]) for r in data["rectangles"]
        )
        edges = tuple(
            DiffractionEdge(e["start"], e["end"], e["normal_a"], e["normal_b"], e["label"])
            for e in data.get("edges", [])
        )
        return PlanarScene(rects, edges, data["tx"], data["rx"])
    except (KeyError, TypeError, ValueError) as e:
        raise SceneFormatError(f"invalid planar scene document: {e}") from e


def dump_planar_scene(scene: PlanarScene, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(planar_scene_to_dict(scene), indent=2))


def load_planar_scene(path: Union[str, Path]) -> PlanarScene:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid JSON: {e.msg}", e.lineno) from e
    return planar_scene_from_dict(data)
