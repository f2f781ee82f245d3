#!/usr/bin/env python3
"""
Point cloud ray launcher - command line entry point.

Subcommands:
    trace       full pipeline, writes path records
    voxelize    grid statistics only
    validate    compare against the analytic oracle on a planar scene
    make-scene  generate a sampled planar scene as pipeline inputs
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

# Add the parent directory to sys.path to ensure imports work
project_dir = Path(__file__).parent.parent
sys.path.insert(0, str(project_dir))

from src.core.config import RunConfig, field_types, load_config
from src.core.errors import PropagationError

logger = logging.getLogger("pc-raylauncher.main")


def _setup_logging(debug: bool) -> None:
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler()],
    )
    if debug:
        logging.getLogger("pc-raylauncher").setLevel(logging.DEBUG)
        logger.info("Debug mode enabled")


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config document (flat RunConfig keys)")
    for name, kind in field_types().items():
        parser.add_argument(
            f"--{name}",
            dest=name,
            default=None,
            help=f"override RunConfig.{name} ({kind.__name__})",
        )


def _overrides(args: argparse.Namespace) -> Dict[str, Optional[str]]:
    return {name: getattr(args, name, None) for name in field_types()}


def _config_from(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, _overrides(args))


def _print(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_trace(args: argparse.Namespace) -> int:
    from src.tools.pipeline import run_pipeline

    summary = run_pipeline(_config_from(args))
    _print(summary.to_dict())
    return 0


def cmd_voxelize(args: argparse.Namespace) -> int:
    from src.tools.pipeline import check_scene, load_scene, voxelize
    from src.tools.voxelgrid import grid_stats

    config = _config_from(args)
    scene = load_scene(config)
    check_scene(scene)
    _print(grid_stats(voxelize(scene, config)))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    from src.tools.pipeline import resolve_planar_scene, validate_against_oracle

    config = _config_from(args)
    report = validate_against_oracle(
        resolve_planar_scene(args.scene), config, angle_tol_deg=args.angle_tol
    )
    _print(report)
    return 0


def cmd_make_scene(args: argparse.Namespace) -> int:
    from src.tools.pipeline import make_scene

    files = make_scene(args.scene, args.out, args.density, args.seed, binary=not args.ascii)
    _print(files)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Point cloud ray launcher")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    trace = sub.add_parser("trace", help="Run the full pipeline")
    _add_config_arguments(trace)
    trace.set_defaults(func=cmd_trace)

    vox = sub.add_parser("voxelize", help="Build the voxel grid and print statistics")
    _add_config_arguments(vox)
    vox.set_defaults(func=cmd_voxelize)

    val = sub.add_parser("validate", help="Match pipeline paths against the analytic oracle")
    val.add_argument("scene", help="preset (box_room, corridor, screen_with_edge) or planar JSON")
    val.add_argument("--angle_tol", type=float, default=1.0, help="match tolerance in degrees")
    _add_config_arguments(val)
    val.set_defaults(func=cmd_validate)

    make = sub.add_parser("make-scene", help="Generate a sampled planar scene")
    make.add_argument("scene", help="preset (box_room, corridor, screen_with_edge) or planar JSON")
    make.add_argument("--out", required=True, help="output directory")
    make.add_argument("--density", type=float, default=5000.0, help="points per square meter")
    make.add_argument("--seed", type=int, default=0, help="sampling seed")
    make.add_argument("--ascii", action="store_true", help="write an ascii point file")
    make.set_defaults(func=cmd_make_scene)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    args = build_parser().parse_args(argv)
    _setup_logging(args.debug)
    try:
        return args.func(args)
    except PropagationError as e:
        logger.error(str(e))
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
