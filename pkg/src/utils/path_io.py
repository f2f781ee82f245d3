"""
Path record files.

JSON Lines: one header object (format, version, producing package version,
config hash, path count), then one record per path sorted by
(tx_id, rx_id, delay). Floats carry 9 significant digits so outputs are
byte-stable across runs.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

from .. import __version__
from ..core.errors import SceneFormatError
from ..tools.refine import ExactPath

logger = logging.getLogger("pc-raylauncher.path_io")

FORMAT_NAME = "pc-raylauncher-paths"
FORMAT_VERSION = 1


def _sig(value: float) -> float:
    return float(f"{float(value):.9g}")


def path_record(path: ExactPath) -> Dict[str, Any]:
    return {
        "tx_id": path.tx_id,
        "rx_id": path.rx_id,
        "delay_s": _sig(path.delay),
        "length_m": _sig(path.total_length),
        "interactions": [
            {
                "kind": node.kind.value,
                "position": [_sig(x) for x in node.position],
                "label": int(node.label),
            }
            for node in path.nodes
        ],
        "converged": bool(path.converged),
        "gradient_norm": _sig(path.gradient_norm),
    }


def write_paths(
    paths: Sequence[ExactPath], path: Union[str, Path], config_hash: str = ""
) -> int:
    """Write the header and sorted path records; returns the record count."""
    ordered = sorted(paths, key=lambda p: p.sort_key())
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "artifact_version": __version__,
        "config_hash": config_hash,
        "path_count": len(ordered),
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines += [json.dumps(path_record(p), separators=(",", ":")) for p in ordered]
    Path(path).write_text("\n".join(lines) + "\n")
    logger.info(f"Wrote {len(ordered)} paths to {path}")
    return len(ordered)


def parse_paths(path: Union[str, Path]) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Read a path file back into (header, records)."""
    lines = [l for l in Path(path).read_text().splitlines() if l.strip()]
    if not lines:
        raise SceneFormatError("empty path file")
    try:
        header = json.loads(lines[0])
        records = [json.loads(l) for l in lines[1:]]
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid path record: {e.msg}") from e
    if header.get("format") != FORMAT_NAME:
        raise SceneFormatError(f"unexpected format '{header.get('format')}'", 1)
    if header.get("path_count") != len(records):
        raise SceneFormatError(
            f"header announces {header.get('path_count')} paths, found {len(records)}"
        )
    return header, records
