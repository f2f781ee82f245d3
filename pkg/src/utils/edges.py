"""
Edge and radio documents.

Edges come either as a JSON array of {start, end, normal_a, normal_b, label}
records or as plain text with one record of 13 numbers per line
(start xyz, end xyz, normal_a xyz, normal_b xyz, label). Radios are a JSON
document {"transmitters": [{"id", "position"}], "receivers": [...]}.
"""

import json
import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from ..core.errors import EdgeRecordError, SceneFormatError
from ..tools.scene import (
    NORMAL_TOLERANCE,
    PERPENDICULAR_TOLERANCE,
    DiffractionEdge,
    Radio,
    RadioKind,
)
from .vecmath import norm

logger = logging.getLogger("pc-raylauncher.edges")

_EDGE_KEYS = ("start", "end", "normal_a", "normal_b", "label")


def _check_edge(index: int, edge: DiffractionEdge) -> DiffractionEdge:
    arrays = (edge.start, edge.end, edge.normal_a, edge.normal_b)
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise EdgeRecordError(index, "non-finite value")
    if edge.length <= 0.0:
        raise EdgeRecordError(index, "degenerate edge (start equals end)")
    for side, n in (("normal_a", edge.normal_a), ("normal_b", edge.normal_b)):
        if abs(norm(n) - 1.0) > NORMAL_TOLERANCE:
            raise EdgeRecordError(index, f"{side} is not unit length")
        if abs(float(np.dot(edge.direction, n))) > PERPENDICULAR_TOLERANCE:
            raise EdgeRecordError(index, f"{side} not perpendicular to edge")
    return edge


def _edge_from_record(index: int, record) -> DiffractionEdge:
    try:
        if isinstance(record, dict):
            values = [record[k] for k in _EDGE_KEYS]
        else:
            flat = [float(x) for x in record]
            if len(flat) != 13:
                raise EdgeRecordError(index, f"expected 13 numbers, got {len(flat)}")
            values = [flat[0:3], flat[3:6], flat[6:9], flat[9:12], flat[12]]
        label = values[4]
        if float(label) != int(float(label)):
            raise EdgeRecordError(index, f"label {label} is not an integer")
        edge = DiffractionEdge(values[0], values[1], values[2], values[3], int(float(label)))
    except EdgeRecordError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise EdgeRecordError(index, f"malformed record: {e}") from e
    return _check_edge(index, edge)


def parse_edges(text: str) -> List[DiffractionEdge]:
    stripped = text.strip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            records = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise SceneFormatError(f"invalid edges document: {e.msg}", e.lineno) from e
    else:
        records = []
        for line in stripped.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                records.append(line.replace(",", " ").split())
    return [_edge_from_record(i, r) for i, r in enumerate(records)]


def load_edges(path: Union[str, Path]) -> List[DiffractionEdge]:
    """Read and validate an edges document; an empty file disables diffraction."""
    edges = parse_edges(Path(path).read_text())
    logger.info(f"Loaded {len(edges)} edges from {path}")
    return edges


def dump_edges(edges: Sequence[DiffractionEdge], path: Union[str, Path]) -> None:
    records = [
        {
            "start": e.start.tolist(),
            "end": e.end.tolist(),
            "normal_a": e.normal_a.tolist(),
            "normal_b": e.normal_b.tolist(),
            "label": e.label,
        }
        for e in edges
    ]
    Path(path).write_text(json.dumps(records, indent=2))


# ==================== Radios ====================


def parse_radios(data: dict) -> Tuple[Tuple[Radio, ...], Tuple[Radio, ...]]:
    try:
        transmitters = tuple(
            Radio(RadioKind.TX, r["position"], r["id"]) for r in data.get("transmitters", [])
        )
        receivers = tuple(
            Radio(RadioKind.RX, r["position"], r["id"]) for r in data.get("receivers", [])
        )
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise SceneFormatError(f"invalid radios document: {e}") from e
    return transmitters, receivers


def load_radios(path: Union[str, Path]) -> Tuple[Tuple[Radio, ...], Tuple[Radio, ...]]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid radios document: {e.msg}", e.lineno) from e
    if not isinstance(data, dict):
        raise SceneFormatError("radios document must be a JSON object")
    return parse_radios(data)


def dump_radios(
    transmitters: Sequence[Radio], receivers: Sequence[Radio], path: Union[str, Path]
) -> None:
    doc = {
        "transmitters": [{"id": r.id, "position": r.position.tolist()} for r in transmitters],
        "receivers": [{"id": r.id, "position": r.position.tolist()} for r in receivers],
    }
    Path(path).write_text(json.dumps(doc, indent=2))
