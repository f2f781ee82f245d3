"""Tests for file formats, configuration, the pipeline driver, the CLI and the tool facade."""

import json
import math

import numpy as np
import pytest

from conftest import make_scene
from src import __version__
from src.core.config import RunConfig, config_hash, load_config, resolve_thread_count
from src.core.errors import (
    ConfigError,
    EdgeRecordError,
    InvalidParameterError,
    MissingFieldError,
    SceneFormatError,
    StageError,
)
from src.main import main
from src.tools import launcher
from src.tools.pipeline import run_pipeline
from src.tools.refine import ExactPath, PathNode
from src.tools.scene import SPEED_OF_LIGHT, LabeledPointCloud
from src.tools.tracer import InteractionKind
from src.utils.edges import dump_edges, load_edges, load_radios, parse_edges, parse_radios
from src.utils.path_io import parse_paths, write_paths
from src.utils.ply import load_point_cloud, write_point_cloud

PLY_HEADER = """ply
format ascii 1.0
comment three floor samples
element vertex 3
property float x
property float y
property float z
property float nx
property float ny
property float nz
property uint label
property float intensity
end_header
"""

PLY_ROWS = """0 0 0 0 0 1 1 0.5
1 0 0 0 0 1 1 0.7
0 1 0 0 0 1 2 0.9
"""


def write_text(tmp_path, name, text):
    target = tmp_path / name
    target.write_text(text)
    return target


def los(length, rx_id="rx0"):
    tx = np.zeros(3)
    rx = np.array([length, 0.0, 0.0])
    return ExactPath("tx0", rx_id, tx, rx, (), length)


def radios_document(tmp_path, tx=(0.0, 0.0, 0.0), rx=(3.0, 0.0, 0.0)):
    doc = {
        "transmitters": [{"id": "tx0", "position": list(tx)}],
        "receivers": [{"id": "rx0", "position": list(rx)}],
    }
    return write_text(tmp_path, "radios.json", json.dumps(doc))


# ==================== Point files ====================


def test_ascii_ply_with_extra_property(tmp_path):
    cloud = load_point_cloud(write_text(tmp_path, "scene.ply", PLY_HEADER + PLY_ROWS))
    assert len(cloud) == 3
    np.testing.assert_allclose(cloud.positions[1], [1, 0, 0])
    assert cloud.labels.tolist() == [1, 1, 2]


def test_ply_missing_normal_component(tmp_path):
    header = PLY_HEADER.replace("property float nx\n", "")
    rows = "\n".join(" ".join(r.split()[:3] + r.split()[4:]) for r in PLY_ROWS.splitlines())
    with pytest.raises(MissingFieldError, match="missing field: nx"):
        load_point_cloud(write_text(tmp_path, "scene.ply", header + rows + "\n"))


def test_ply_bad_magic_reports_first_line(tmp_path):
    with pytest.raises(SceneFormatError, match=r"\(line 1\)") as info:
        load_point_cloud(write_text(tmp_path, "scene.ply", "plx\n" + PLY_HEADER[4:]))
    assert info.value.line == 1


def test_ply_short_body_reports_missing_row_line(tmp_path):
    with pytest.raises(SceneFormatError, match="bad vertex data") as info:
        load_point_cloud(write_text(tmp_path, "scene.ply", PLY_HEADER + PLY_ROWS.splitlines()[0] + "\n"))
    # 13 header lines, one row present
    assert info.value.line == 15


def test_ply_without_vertex_element(tmp_path):
    text = "ply\nformat ascii 1.0\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n"
    with pytest.raises(SceneFormatError, match="missing vertex element"):
        load_point_cloud(write_text(tmp_path, "scene.ply", text))


@pytest.mark.parametrize("binary", [True, False])
def test_written_point_file_loads_back(tmp_path, binary):
    cloud = LabeledPointCloud(
        [[0.25, -1.5, 2.0], [3.0, 0.125, -0.5]], [[0, 0, 1], [1, 0, 0]], [7, 9]
    )
    target = tmp_path / "scene.ply"
    write_point_cloud(cloud, target, binary=binary)
    loaded = load_point_cloud(target)
    np.testing.assert_allclose(loaded.positions, cloud.positions, atol=1e-6)
    np.testing.assert_allclose(loaded.normals, cloud.normals, atol=1e-6)
    assert loaded.labels.tolist() == [7, 9]


# ==================== Edges and radios ====================


EDGE = {"start": [-1, 0, 0], "end": [1, 0, 0], "normal_a": [0, 0, 1], "normal_b": [0, -1, 0], "label": 100}


def test_edges_json_document():
    (edge,) = parse_edges(json.dumps([EDGE]))
    assert edge.label == 100
    assert edge.length == pytest.approx(2.0)


def test_degenerate_edge_names_its_index():
    record = dict(EDGE, end=EDGE["start"])
    with pytest.raises(EdgeRecordError) as info:
        parse_edges(json.dumps([record]))
    assert info.value.index == 0
    assert "degenerate" in str(info.value)


def test_edge_normal_must_be_perpendicular():
    record = dict(EDGE, normal_a=[1, 0, 0])
    with pytest.raises(EdgeRecordError, match="not perpendicular"):
        parse_edges(json.dumps([EDGE, record]))


def test_empty_edges_file_disables_diffraction():
    assert parse_edges("") == []
    assert parse_edges("  \n") == []


def test_edges_file_written_then_loaded(tmp_path):
    target = tmp_path / "edges.json"
    dump_edges(parse_edges(json.dumps([EDGE])), target)
    (edge,) = load_edges(target)
    np.testing.assert_allclose(edge.start, [-1, 0, 0])
    np.testing.assert_allclose(edge.normal_b, [0, -1, 0])
    assert edge.label == 100


def test_text_edge_records():
    text = "# start end normal_a normal_b label\n-1 0 0 1 0 0 0 0 1 0 -1 0 100  # ridge\n\n"
    (edge,) = parse_edges(text)
    np.testing.assert_allclose(edge.direction, [1, 0, 0])
    with pytest.raises(EdgeRecordError, match="not an integer"):
        parse_edges("-1 0 0 1 0 0 0 0 1 0 -1 0 1.5")
    with pytest.raises(EdgeRecordError, match="expected 13 numbers"):
        parse_edges("-1 0 0 1 0 0")


def test_radios_document(tmp_path):
    transmitters, receivers = load_radios(radios_document(tmp_path))
    assert [r.id for r in transmitters] == ["tx0"]
    np.testing.assert_allclose(receivers[0].position, [3, 0, 0])
    with pytest.raises(SceneFormatError, match="invalid radios"):
        parse_radios({"transmitters": [{"id": "tx0"}]})
    with pytest.raises(SceneFormatError):
        load_radios(write_text(tmp_path, "list.json", "[]"))


# ==================== Configuration ====================


def test_config_defaults():
    config = load_config()
    assert config == RunConfig()
    assert config.carrier_frequency_hz == 60e9
    assert config.division_factor == 2
    assert config.kappa == 100
    assert config.cone_apex_angle_rad == pytest.approx(math.radians(1.0))


def test_overrides_beat_document(tmp_path):
    doc = write_text(tmp_path, "config.json", json.dumps({"kappa": 20, "voxel_size_m": 0.25}))
    config = load_config(doc, {"kappa": "50", "rho": None})
    assert config.kappa == 50
    assert config.voxel_size_m == 0.25
    assert config.rho == 2000


def test_config_rejects_unknown_and_malformed_values(tmp_path):
    with pytest.raises(ConfigError, match="Unknown config key 'voxel'"):
        load_config(None, {"voxel": 1})
    with pytest.raises(ConfigError, match="not an integer"):
        load_config(None, {"kappa": "2.5"})
    with pytest.raises(ConfigError, match="flat JSON object"):
        load_config(write_text(tmp_path, "config.json", "[1, 2]"))
    with pytest.raises(InvalidParameterError, match="voxel_size_m"):
        load_config(None, {"voxel_size_m": 0})


def test_config_hash_tracks_result_fields_only():
    base = RunConfig()
    assert config_hash(base) == config_hash(RunConfig(output_path="elsewhere.jsonl", thread_count=4))
    assert config_hash(base) != config_hash(RunConfig(kappa=50))


def test_thread_count_resolution():
    assert resolve_thread_count(RunConfig(thread_count=3)) == 3
    assert resolve_thread_count(RunConfig()) >= 1


# ==================== Path records ====================


def test_empty_path_file_has_header_only(tmp_path):
    target = tmp_path / "paths.jsonl"
    assert write_paths([], target, "abc") == 0
    header, records = parse_paths(target)
    assert header["path_count"] == 0
    assert header["config_hash"] == "abc"
    assert header["artifact_version"] == __version__
    assert records == []


def test_path_records_are_sorted_and_rounded(tmp_path):
    node = PathNode(InteractionKind.REFLECTION, np.array([0.5, 0.0, 0.0]), 1, np.array([0.0, 0.0, 1.0]))
    tx, rx = np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 1.0])
    bounce = ExactPath("tx0", "rx0", tx, rx, (node,), math.sqrt(5.0))
    target = tmp_path / "paths.jsonl"
    write_paths([bounce, los(3.0, "rx1"), los(1.0)], target)
    _, records = parse_paths(target)
    assert [(r["rx_id"], len(r["interactions"])) for r in records] == [("rx0", 0), ("rx0", 1), ("rx1", 0)]
    assert records[0]["delay_s"] == pytest.approx(1.0 / SPEED_OF_LIGHT, rel=1e-9)
    assert records[1]["length_m"] == 2.23606798
    assert records[1]["interactions"][0] == {"kind": "reflection", "position": [0.5, 0.0, 0.0], "label": 1}


def test_path_file_header_is_checked(tmp_path):
    with pytest.raises(SceneFormatError, match="unexpected format"):
        parse_paths(write_text(tmp_path, "paths.jsonl", '{"format": "other", "path_count": 0}\n'))
    with pytest.raises(SceneFormatError, match="announces 2 paths"):
        parse_paths(
            write_text(tmp_path, "paths.jsonl", '{"format": "pc-raylauncher-paths", "path_count": 2}\n{}\n')
        )


# ==================== Pipeline ====================


def test_empty_geometry_run_yields_los(tmp_path):
    config = RunConfig(output_path=str(tmp_path / "paths.jsonl"), thread_count=1)
    summary = run_pipeline(config, scene=make_scene(tx=(0, 0, 0), rx=(3, 0, 0)))
    assert summary.coarse_paths == 1
    assert summary.exact_paths == 1
    assert summary.paths[0].total_length == pytest.approx(3.0)
    assert {"validate", "voxelize", "trace", "refine", "dedup_label", "write"} <= set(summary.stage_times)
    _, records = parse_paths(tmp_path / "paths.jsonl")
    assert records[0]["delay_s"] == pytest.approx(3.0 / SPEED_OF_LIGHT, rel=1e-8)


def test_explicit_default_document_matches_a_defaults_run(tmp_path, floor_scene):
    document = {k: v for k, v in RunConfig().to_dict().items() if k != "output_path"}
    doc = write_text(tmp_path, "config.json", json.dumps(document))
    outputs = []
    for name, path in (("explicit", doc), ("defaults", None)):
        target = tmp_path / f"{name}.jsonl"
        config = load_config(path, {"output_path": str(target), "thread_count": 1})
        summary = run_pipeline(config, scene=floor_scene)
        outputs.append((summary.config_hash, target.read_bytes()))
    assert outputs[0] == outputs[1]
    header, records = parse_paths(tmp_path / "explicit.jsonl")
    assert header["config_hash"] == config_hash(RunConfig())
    assert records


def test_invalid_scene_fails_in_validate_stage():
    with pytest.raises(StageError) as info:
        run_pipeline(RunConfig(output_path="", thread_count=1), scene=make_scene(tx=(0, 0, 0)))
    assert info.value.stage == "validate"
    assert "no_receiver" in str(info.value)


def test_missing_scene_file_fails_in_load_stage(tmp_path):
    config = RunConfig(scene_path=str(tmp_path / "absent.ply"), output_path="")
    with pytest.raises(StageError) as info:
        run_pipeline(config)
    assert info.value.stage == "load"


# ==================== CLI ====================


def test_cli_trace_on_empty_geometry(tmp_path, capsys):
    radios = radios_document(tmp_path)
    out = tmp_path / "paths.jsonl"
    code = main(["trace", "--radios_path", str(radios), "--output_path", str(out), "--thread_count", "1"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["exact_paths"] == 1
    assert out.exists()


def test_cli_reports_errors_with_exit_code(tmp_path, capsys):
    code = main(["voxelize", "--scene_path", str(tmp_path / "absent.ply")])
    assert code == 1
    err = capsys.readouterr().err
    assert any(line.startswith("Error: stage 'load'") for line in err.splitlines())


def test_cli_make_scene(tmp_path, capsys):
    assert main(["make-scene", "screen_with_edge", "--out", str(tmp_path), "--density", "100"]) == 0
    files = json.loads(capsys.readouterr().out)
    assert load_point_cloud(files["scene_path"]).labels.max() == 2
    assert json.loads((tmp_path / "config.json").read_text())["density"] == 100.0


# ==================== Tool facade ====================


def test_launcher_returns_error_strings(tmp_path):
    assert launcher.trace_scene(overrides={"kappa": 0}).startswith("Error:")
    assert launcher.validate_scene_against_oracle("box_room", angle_tol_deg=120).startswith("Error:")
    assert launcher.make_scene("box_room", str(tmp_path), density=-1).startswith("Error:")
    assert launcher.make_scene("no_such_preset", str(tmp_path)).startswith("Error:")


def test_launcher_scene_round_trip(tmp_path):
    assert launcher.list_presets() == ["box_room", "corridor", "screen_with_edge"]
    files = launcher.make_scene("screen_with_edge", str(tmp_path), density=100, seed=2)
    stats = launcher.voxelize_scene(files["config_path"])
    assert stats["edge_ies"] > 0
    assert stats["receiver_ies"] == 1
    assert stats["surface_ies"] > 0
