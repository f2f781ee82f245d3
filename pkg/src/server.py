#!/usr/bin/env python3
"""
Point Cloud Ray Launcher - tool server

Exposes the propagation pipeline over the Model Context Protocol (MCP):
full runs, grid statistics, oracle validation and scene generation.
"""

import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

# Setup logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler()],
)
logger = logging.getLogger("pc-raylauncher")

# Add paths
current_dir = os.path.dirname(os.path.abspath(__file__))
parent_dir = os.path.dirname(current_dir)
if parent_dir not in sys.path:
    sys.path.insert(0, parent_dir)

# Import MCP
from mcp.server.fastmcp import FastMCP

from src import __version__ as VERSION
from src.core import RunConfig
from src.tools import launcher

# Create MCP server
mcp = FastMCP("PointCloudRayLauncher")


# ==================== Resources ====================


@mcp.resource("propagation://version")
def resource_version() -> str:
    """Server version."""
    return VERSION


@mcp.resource("propagation://defaults")
def resource_defaults() -> str:
    """Default run configuration as JSON."""
    return json.dumps(RunConfig().to_dict(), indent=2)


@mcp.resource("propagation://presets")
def resource_presets() -> List[str]:
    """Planar scene presets usable with validation and scene generation."""
    return launcher.list_presets()


# ==================== Pipeline Tools ====================


@mcp.tool()
def trace_scene(config_path: str = "", overrides: Optional[Dict[str, Any]] = None) -> Any:
    """Run voxelization, tracing, refinement and deduplication; returns the run summary."""
    return launcher.trace_scene(config_path, overrides)


@mcp.tool()
def voxelize_scene(config_path: str = "", overrides: Optional[Dict[str, Any]] = None) -> Any:
    """Build the voxel grid only and return its statistics."""
    return launcher.voxelize_scene(config_path, overrides)


# ==================== Oracle Tools ====================


@mcp.tool()
def validate_scene_against_oracle(
    scene: str,
    angle_tol_deg: float = 1.0,
    config_path: str = "",
    overrides: Optional[Dict[str, Any]] = None,
) -> Any:
    """Compare pipeline paths on a planar preset (or planar JSON) with analytic paths."""
    return launcher.validate_scene_against_oracle(scene, angle_tol_deg, config_path, overrides)


@mcp.tool()
def make_scene(
    scene: str, out_dir: str, density: float = 5000.0, seed: int = 0, binary: bool = True
) -> Any:
    """Sample a planar preset into scene, edges, radios and config files."""
    return launcher.make_scene(scene, out_dir, density, seed, binary)


def main():
    """Main entry point."""
    logger.info(f"Starting Point Cloud Ray Launcher server v{VERSION}")
    mcp.run()


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        logger.info("Server shutdown requested")
    except Exception as e:
        logger.error(f"Server error: {e}")
        sys.exit(1)
