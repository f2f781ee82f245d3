"""
Polygon point file (PLY) reader and writer for labeled point clouds.

Parsing and serialization go through plyfile. Only the vertex element is
read; required vertex properties are x, y, z, nx, ny, nz and label, extra
properties are ignored.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from plyfile import PlyData, PlyElement, PlyElementParseError, PlyHeaderParseError

from ..core.errors import MissingFieldError, SceneFormatError
from ..tools.scene import LabeledPointCloud

logger = logging.getLogger("pc-raylauncher.ply")

REQUIRED_FIELDS = ("x", "y", "z", "nx", "ny", "nz", "label")

_VERTEX_DTYPE = np.dtype([(name, "<f4") for name in REQUIRED_FIELDS[:6]] + [("label", "<u4")])


def _header_line_count(path: Union[str, Path]) -> int:
    with open(path, "rb") as stream:
        for n, raw in enumerate(stream, start=1):
            if raw.strip() == b"end_header":
                return n
    return 0


def _read(path: Union[str, Path]) -> PlyData:
    with open(path, "rb") as stream:
        try:
            return PlyData.read(stream, mmap=False)
        except PlyHeaderParseError as e:
            raise SceneFormatError(e.message, e.line) from e
        except PlyElementParseError as e:
            line = None
            if e.row is not None:
                line = _header_line_count(path) + e.row + 1
            element = e.element.name if e.element is not None else "element"
            raise SceneFormatError(f"bad {element} data: {e.message}", line) from e


def load_point_cloud(path: Union[str, Path]) -> LabeledPointCloud:
    """Read a labeled point cloud from an ascii or binary PLY file."""
    data = _read(path)
    if "vertex" not in [element.name for element in data.elements]:
        raise SceneFormatError("missing vertex element")
    vertex = data["vertex"]
    names = [prop.name for prop in vertex.properties]
    for required in REQUIRED_FIELDS:
        if required not in names:
            raise MissingFieldError(required)

    positions = np.stack([vertex["x"], vertex["y"], vertex["z"]], axis=1).astype(np.float64)
    normals = np.stack([vertex["nx"], vertex["ny"], vertex["nz"]], axis=1).astype(np.float64)
    labels = np.asarray(vertex["label"]).astype(np.int64)
    fmt = "ascii" if data.text else "binary"
    logger.info(f"Loaded {vertex.count} points from {path} ({fmt})")
    return LabeledPointCloud(positions, normals, labels)


def write_point_cloud(cloud: LabeledPointCloud, path: Union[str, Path], binary: bool = True) -> None:
    """Write x, y, z, nx, ny, nz as float32 and label as uint32."""
    records = np.empty(len(cloud), dtype=_VERTEX_DTYPE)
    for axis, name in enumerate("xyz"):
        records[name] = cloud.positions[:, axis]
        records["n" + name] = cloud.normals[:, axis]
    records["label"] = cloud.labels

    element = PlyElement.describe(records, "vertex")
    PlyData([element], text=not binary, byte_order="<").write(str(path))
    logger.info(f"Wrote {len(cloud)} points to {path} ({'binary' if binary else 'ascii'})")
