"""
Scene tools for the point cloud ray launcher.

Covers: labeled point cloud, manually specified diffraction edges, radios,
scene validation and bounds.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, List, Tuple

import numpy as np

from ..core.errors import EmptySceneError
from ..utils.vecmath import angle_between, norm, vec3

logger = logging.getLogger("pc-raylauncher.scene")

NORMAL_TOLERANCE = 1e-6
PERPENDICULAR_TOLERANCE = 1e-3
SPEED_OF_LIGHT = 299792458.0


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.flags.writeable = False
    return arr


# ==================== Points ====================


@dataclass(frozen=True, eq=False)
class LabeledPoint:
    """A single surface sample: position (m), unit normal, surface label."""

    position: np.ndarray
    normal: np.ndarray
    label: int


class LabeledPointCloud:
    """
    Columnar, read-only point cloud.

    positions and normals are (N, 3) float64 arrays, labels an (N,) int64 array.
    Indexing yields LabeledPoint records.
    """

    __slots__ = ("positions", "normals", "labels")

    def __init__(self, positions, normals, labels):
        positions = _frozen(np.asarray(positions, dtype=np.float64).reshape(-1, 3))
        normals = _frozen(np.asarray(normals, dtype=np.float64).reshape(-1, 3))
        labels = np.array(labels, dtype=np.int64, copy=True).reshape(-1)
        labels.flags.writeable = False
        if not (len(positions) == len(normals) == len(labels)):
            raise ValueError(
                f"column length mismatch: {len(positions)} positions, "
                f"{len(normals)} normals, {len(labels)} labels"
            )
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "labels", labels)

    def __setattr__(self, name, value):
        raise AttributeError("LabeledPointCloud is immutable")

    def __reduce__(self):
        return (type(self), (self.positions, self.normals, self.labels))

    @classmethod
    def empty(cls) -> "LabeledPointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_points(cls, points: Iterable[LabeledPoint]) -> "LabeledPointCloud":
        points = list(points)
        if not points:
            return cls.empty()
        return cls(
            [p.position for p in points],
            [p.normal for p in points],
            [p.label for p in points],
        )

    @classmethod
    def concatenate(cls, clouds: Iterable["LabeledPointCloud"]) -> "LabeledPointCloud":
        clouds = [c for c in clouds if len(c)]
        if not clouds:
            return cls.empty()
        return cls(
            np.concatenate([c.positions for c in clouds]),
            np.concatenate([c.normals for c in clouds]),
            np.concatenate([c.labels for c in clouds]),
        )

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, index: int) -> LabeledPoint:
        return LabeledPoint(
            self.positions[index], self.normals[index], int(self.labels[index])
        )

    def __iter__(self) -> Iterator[LabeledPoint]:
        for i in range(len(self)):
            yield self[i]

    @property
    def surface_labels(self) -> np.ndarray:
        return np.unique(self.labels)


# ==================== Edges and Radios ====================


@dataclass(frozen=True, eq=False)
class DiffractionEdge:
    """
    A manually inserted wedge edge.

    The wedge is a convex corner: each face extends away from the other
    face's normal, so the free-space opening angle is pi + angle(n_a, n_b).
    """

    start: np.ndarray
    end: np.ndarray
    normal_a: np.ndarray
    normal_b: np.ndarray
    label: int

    def __post_init__(self):
        for name in ("start", "end", "normal_a", "normal_b"):
            object.__setattr__(self, name, _frozen(vec3(getattr(self, name))))
        object.__setattr__(self, "label", int(self.label))

    @property
    def length(self) -> float:
        return norm(self.end - self.start)

    @property
    def direction(self) -> np.ndarray:
        return (self.end - self.start) / self.length

    @property
    def opening_angle(self) -> float:
        """Wedge angle measured through free space."""
        return float(np.pi + angle_between(self.normal_a, self.normal_b))

    def point_at(self, t: float) -> np.ndarray:
        """Point at arc length t from start."""
        return self.start + t * self.direction

    def is_exterior_for(self, incoming: np.ndarray, tolerance: float = 1e-6) -> bool:
        """
        True when a ray travelling along ``incoming`` can reach the edge from free space
        and the wedge opens by more than pi.
        """
        if self.opening_angle <= np.pi + tolerance:
            return False
        return bool(
            np.dot(incoming, self.normal_a) < 0.0 or np.dot(incoming, self.normal_b) < 0.0
        )

    def enters_solid(self, direction: np.ndarray, tolerance: float = 1e-9) -> bool:
        """True when a direction leaving the edge points into the wedge's solid."""
        return bool(
            np.dot(direction, self.normal_a) < -tolerance
            and np.dot(direction, self.normal_b) < -tolerance
        )


class RadioKind(str, Enum):
    TX = "TX"
    RX = "RX"


@dataclass(frozen=True, eq=False)
class Radio:
    kind: RadioKind
    position: np.ndarray
    id: str

    def __post_init__(self):
        object.__setattr__(self, "kind", RadioKind(self.kind))
        object.__setattr__(self, "position", _frozen(vec3(self.position)))
        object.__setattr__(self, "id", str(self.id))


# ==================== Scene ====================


@dataclass(frozen=True, eq=False)
class Scene:
    points: LabeledPointCloud
    edges: Tuple[DiffractionEdge, ...] = ()
    transmitters: Tuple[Radio, ...] = ()
    receivers: Tuple[Radio, ...] = ()
    carrier_frequency: float = 60e9

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "transmitters", tuple(self.transmitters))
        object.__setattr__(self, "receivers", tuple(self.receivers))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def receiver(self, rx_id: str) -> Radio:
        for rx in self.receivers:
            if rx.id == rx_id:
                return rx
        raise KeyError(rx_id)

    def transmitter(self, tx_id: str) -> Radio:
        for tx in self.transmitters:
            if tx.id == tx_id:
                return tx
        raise KeyError(tx_id)

    def fingerprint(self) -> str:
        """SHA-256 over every array and record in the scene."""
        h = hashlib.sha256()
        for arr in (self.points.positions, self.points.normals, self.points.labels):
            h.update(np.ascontiguousarray(arr).tobytes())
        for edge in self.edges:
            for arr in (edge.start, edge.end, edge.normal_a, edge.normal_b):
                h.update(arr.tobytes())
            h.update(str(edge.label).encode())
        for radio in self.transmitters + self.receivers:
            h.update(radio.kind.value.encode())
            h.update(radio.id.encode())
            h.update(radio.position.tobytes())
        h.update(repr(float(self.carrier_frequency)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class Violation:
    """One broken scene invariant. index is -1 for scene-level rules."""

    rule: str
    element: str
    index: int
    message: str = ""

    def __str__(self) -> str:
        where = f"{self.element}[{self.index}]" if self.index >= 0 else self.element
        return f"{self.rule} at {where}" + (f": {self.message}" if self.message else "")


@dataclass(frozen=True, eq=False)
class Bounds:
    minimum: np.ndarray = field(default_factory=lambda: np.zeros(3))
    maximum: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def extent(self) -> np.ndarray:
        return self.maximum - self.minimum

    def contains(self, p: np.ndarray) -> bool:
        return bool(np.all(p >= self.minimum) and np.all(p <= self.maximum))


def _validate_points(cloud: LabeledPointCloud) -> List[Violation]:
    violations = []
    if not len(cloud):
        return violations
    bad_pos = ~np.all(np.isfinite(cloud.positions), axis=1)
    lengths = np.linalg.norm(cloud.normals, axis=1)
    bad_normal = ~np.isfinite(lengths) | (np.abs(lengths - 1.0) > NORMAL_TOLERANCE)
    bad_label = cloud.labels < 0
    for i in np.flatnonzero(bad_pos):
        violations.append(Violation("non_finite_position", "points", int(i)))
    for i in np.flatnonzero(bad_normal):
        violations.append(
            Violation("non_unit_normal", "points", int(i), f"|n| = {lengths[i]:.6g}")
        )
    for i in np.flatnonzero(bad_label):
        violations.append(Violation("missing_label", "points", int(i)))
    return violations


def _validate_edges(scene: Scene) -> List[Violation]:
    violations = []
    surface_labels = set(int(x) for x in scene.points.surface_labels)
    for i, edge in enumerate(scene.edges):
        arrays = (edge.start, edge.end, edge.normal_a, edge.normal_b)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            violations.append(Violation("non_finite_edge", "edges", i))
            continue
        if edge.length <= 0.0:
            violations.append(Violation("degenerate_edge", "edges", i))
            continue
        w = edge.direction
        for side, n in (("a", edge.normal_a), ("b", edge.normal_b)):
            if abs(norm(n) - 1.0) > NORMAL_TOLERANCE:
                violations.append(
                    Violation("non_unit_edge_normal", "edges", i, f"normal_{side}")
                )
            elif abs(float(np.dot(w, n))) > PERPENDICULAR_TOLERANCE:
                violations.append(
                    Violation("edge_normal_not_perpendicular", "edges", i, f"normal_{side}")
                )
        if edge.label in surface_labels:
            violations.append(
                Violation("edge_label_collision", "edges", i, f"label {edge.label}")
            )
    return violations


def _validate_radios(radios: Tuple[Radio, ...], kind: RadioKind, element: str) -> List[Violation]:
    violations = []
    seen = set()
    for i, radio in enumerate(radios):
        if radio.kind != kind:
            violations.append(Violation("radio_kind_mismatch", element, i, radio.kind.value))
        if not np.all(np.isfinite(radio.position)):
            violations.append(Violation("non_finite_radio", element, i))
        if radio.id in seen:
            violations.append(Violation("duplicate_radio_id", element, i, radio.id))
        seen.add(radio.id)
    return violations


def validate_scene(scene: Scene) -> List[Violation]:
    """
    Check every scene invariant and report violations; never raises.

    An empty point list is accepted (a LOS-only scene); a scene without a
    transmitter or receiver is not.
    """
    violations = _validate_points(scene.points)
    violations += _validate_edges(scene)
    violations += _validate_radios(scene.transmitters, RadioKind.TX, "transmitters")
    violations += _validate_radios(scene.receivers, RadioKind.RX, "receivers")
    if not scene.transmitters:
        violations.append(Violation("no_transmitter", "scene", -1))
    if not scene.receivers:
        violations.append(Violation("no_receiver", "scene", -1))
    if not (np.isfinite(scene.carrier_frequency) and scene.carrier_frequency > 0):
        violations.append(Violation("non_positive_frequency", "scene", -1))
    if violations:
        logger.debug(f"Scene validation found {len(violations)} violations")
    return violations


def scene_bounds(scene: Scene, voxel_size: float) -> Bounds:
    """Axis-aligned box around points, edges and radios, padded by one voxel."""
    parts = [scene.points.positions]
    parts += [np.stack([e.start, e.end]) for e in scene.edges]
    parts += [r.position[None, :] for r in scene.transmitters + scene.receivers]
    stacked = np.concatenate([p for p in parts if len(p)]) if any(len(p) for p in parts) else None
    if stacked is None:
        raise EmptySceneError()
    return Bounds(stacked.min(axis=0) - voxel_size, stacked.max(axis=0) + voxel_size)
