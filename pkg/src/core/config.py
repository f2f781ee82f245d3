"""
Run configuration for the point cloud ray launcher.

Defaults mirror the reference simulation parameters (60 GHz carrier, 0.5 m
voxels, D_v = 2, kappa = 100, five interactions, delta = 1e-4, rho = 2000).
A config document is a flat JSON object keyed by RunConfig field names.
"""

import dataclasses
import hashlib
import json
import logging
import math
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import psutil

from .errors import ConfigError, InvalidParameterError

logger = logging.getLogger("pc-raylauncher.config")

# Fields that never change the traced paths.
_NON_RESULT_FIELDS = ("output_path", "thread_count", "seed")


@dataclass(frozen=True)
class RunConfig:
    """All tunables of a run. Paths are plain strings so the config stays hashable."""

    scene_path: str = ""
    edges_path: Optional[str] = None
    radios_path: Optional[str] = None
    output_path: str = "paths.jsonl"
    carrier_frequency_hz: float = 60e9
    voxel_size_m: float = 0.5
    division_factor: int = 2
    kappa: int = 100
    max_interactions: int = 5
    max_diffractions: int = 1
    cone_apex_angle_deg: float = 1.0
    diffraction_ray_count: int = 360
    delta: float = 1e-4
    rho: int = 2000
    step_size: float = 0.5
    seed: int = 0
    thread_count: int = 0
    density: float = 5000.0
    max_cells: int = 2**27

    def __post_init__(self):
        checks = {
            "carrier_frequency_hz": (self.carrier_frequency_hz > 0, "> 0"),
            "voxel_size_m": (self.voxel_size_m > 0, "> 0"),
            "division_factor": (self.division_factor >= 1, ">= 1"),
            "kappa": (self.kappa >= 1, ">= 1"),
            "max_interactions": (self.max_interactions >= 0, ">= 0"),
            "max_diffractions": (self.max_diffractions >= 0, ">= 0"),
            "cone_apex_angle_deg": (0 < self.cone_apex_angle_deg < 45, "in (0, 45) degrees"),
            "diffraction_ray_count": (self.diffraction_ray_count >= 2, ">= 2"),
            "delta": (self.delta > 0, "> 0"),
            "rho": (self.rho >= 1, ">= 1"),
            "step_size": (self.step_size > 0, "> 0"),
            "thread_count": (self.thread_count >= 0, ">= 0 (0 = auto)"),
            "density": (self.density > 0, "> 0"),
            "max_cells": (self.max_cells >= 1, ">= 1"),
        }
        for name, (ok, requirement) in checks.items():
            if not ok:
                raise InvalidParameterError(name, requirement)

    @property
    def cone_apex_angle_rad(self) -> float:
        return math.radians(self.cone_apex_angle_deg)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def field_types() -> Dict[str, type]:
    """Map each RunConfig field to the scalar type used when parsing overrides."""
    hints = typing.get_type_hints(RunConfig)
    types = {}
    for name, hint in hints.items():
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        types[name] = args[0] if args else hint
    return types


def coerce_value(name: str, value: Any) -> Any:
    """Convert a raw document or CLI value to the field's type."""
    types = field_types()
    if name not in types:
        raise ConfigError(f"Unknown config key '{name}'")
    if value is None:
        return None
    target = types[name]
    try:
        if target is int:
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError(f"{value!r} is not an integer")
            return int(as_float)
        return target(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Config key '{name}': {e}") from e


def load_config(
    path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Build a RunConfig from defaults, an optional JSON document and overrides.

    Overrides win over document values, which win over defaults. Override
    entries whose value is None are ignored.
    """
    values: Dict[str, Any] = {}
    if path is not None:
        try:
            document = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config '{path}': {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"Config '{path}' must be a flat JSON object")
        for key, value in document.items():
            values[key] = coerce_value(key, value)
        logger.debug(f"Loaded {len(document)} config keys from {path}")

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = coerce_value(key, value)

    return RunConfig(**values)


def config_hash(config: RunConfig) -> str:
    """SHA-256 over the result-relevant fields, canonical JSON encoding."""
    relevant = {k: v for k, v in config.to_dict().items() if k not in _NON_RESULT_FIELDS}
    payload = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def resolve_thread_count(config: RunConfig) -> int:
    """thread_count 0 means one worker per logical CPU."""
    if config.thread_count > 0:
        return config.thread_count
    return psutil.cpu_count(logical=True) or 1
