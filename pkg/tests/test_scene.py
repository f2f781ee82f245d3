"""Tests for scene records, validation and bounds."""

import pickle

import numpy as np
import pytest

from conftest import make_scene
from src.core.config import RunConfig
from src.core.errors import EmptySceneError
from src.tools.scene import (
    DiffractionEdge,
    LabeledPointCloud,
    Radio,
    RadioKind,
    Scene,
    scene_bounds,
    validate_scene,
)
from src.tools.pipeline import run_pipeline


def single_point(normal=(0.0, 0.0, 1.0), label=1):
    return LabeledPointCloud([[0.0, 0.0, 0.0]], [normal], [label])


def test_valid_scene_has_no_violations():
    scene = make_scene(single_point(), tx=(0, 0, 1), rx=(1, 0, 1))
    assert validate_scene(scene) == []


def test_non_unit_normal_reported_with_index():
    scene = make_scene(single_point(normal=(0.0, 0.0, 2.0)), tx=(0, 0, 1), rx=(1, 0, 1))
    violations = validate_scene(scene)
    assert len(violations) == 1
    assert violations[0].rule == "non_unit_normal"
    assert violations[0].index == 0


def test_degenerate_edge_reported():
    edge = DiffractionEdge((0, 0, 0), (0, 0, 0), (0, 0, 1), (0, 1, 0), 100)
    scene = make_scene(single_point(), edges=[edge], tx=(0, 0, 1), rx=(1, 0, 1))
    violations = validate_scene(scene)
    assert [v.rule for v in violations] == ["degenerate_edge"]


def test_edge_label_must_differ_from_surface_labels():
    edge = DiffractionEdge((0, 0, 0), (1, 0, 0), (0, 0, 1), (0, 1, 0), 1)
    scene = make_scene(single_point(label=1), edges=[edge], tx=(0, 0, 1), rx=(1, 0, 1))
    assert [v.rule for v in validate_scene(scene)] == ["edge_label_collision"]


def test_missing_radios_and_duplicate_ids():
    assert {v.rule for v in validate_scene(make_scene(single_point()))} == {
        "no_transmitter",
        "no_receiver",
    }
    scene = Scene(
        single_point(),
        (),
        (Radio(RadioKind.TX, (0, 0, 1), "a"),),
        (Radio(RadioKind.RX, (1, 0, 1), "r"), Radio(RadioKind.RX, (2, 0, 1), "r")),
    )
    assert [v.rule for v in validate_scene(scene)] == ["duplicate_radio_id"]


def test_empty_point_cloud_is_a_valid_los_scene():
    scene = make_scene(tx=(0, 0, 0), rx=(3, 0, 0))
    assert validate_scene(scene) == []


def test_bounds_pad_by_one_voxel():
    cloud = LabeledPointCloud([[0, 0, 0], [1, 2, 3]], [[0, 0, 1]] * 2, [1, 1])
    bounds = scene_bounds(make_scene(cloud), 0.5)
    np.testing.assert_allclose(bounds.minimum, [-0.5, -0.5, -0.5])
    np.testing.assert_allclose(bounds.maximum, [1.5, 2.5, 3.5])


def test_bounds_single_point():
    cloud = LabeledPointCloud([[1, 1, 1]], [[0, 0, 1]], [1])
    bounds = scene_bounds(make_scene(cloud), 0.5)
    np.testing.assert_allclose(bounds.minimum, [0.5, 0.5, 0.5])
    np.testing.assert_allclose(bounds.maximum, [1.5, 1.5, 1.5])


def test_bounds_include_radios():
    bounds = scene_bounds(make_scene(single_point(), rx=(5, 0, 0)), 0.5)
    assert bounds.maximum[0] >= 5.5


def test_bounds_of_empty_scene_raise():
    with pytest.raises(EmptySceneError, match="empty scene"):
        scene_bounds(make_scene(), 0.5)


def test_point_cloud_is_immutable():
    cloud = single_point()
    with pytest.raises(AttributeError):
        cloud.labels = np.zeros(1)
    with pytest.raises(ValueError):
        cloud.positions[0, 0] = 1.0


def test_point_cloud_rejects_ragged_columns():
    with pytest.raises(ValueError, match="column length mismatch"):
        LabeledPointCloud([[0, 0, 0], [1, 1, 1]], [[0, 0, 1]], [1, 1])


def test_cloud_concatenation_and_indexing():
    merged = LabeledPointCloud.concatenate([single_point(label=1), single_point(label=2)])
    assert len(merged) == 2
    assert merged[1].label == 2
    assert list(merged.surface_labels) == [1, 2]


def test_exterior_edge_convention():
    edge = DiffractionEdge((-1, 0, 0), (1, 0, 0), (0, 0, 1), (0, -1, 0), 100)
    assert edge.opening_angle == pytest.approx(1.5 * np.pi)
    assert edge.is_exterior_for(np.array([0.0, 1.0, 1.0]) / np.sqrt(2.0))
    assert edge.enters_solid(np.array([0.0, 1.0, -1.0]) / np.sqrt(2.0))
    assert not edge.enters_solid(np.array([0.0, 1.0, 1.0]) / np.sqrt(2.0))


def test_fingerprint_tracks_content():
    a = make_scene(single_point(), tx=(0, 0, 1), rx=(1, 0, 1))
    b = make_scene(single_point(), tx=(0, 0, 1), rx=(1, 0, 1))
    c = make_scene(single_point(), tx=(0, 0, 1), rx=(1, 0, 2))
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_point_cloud_survives_pickling():
    cloud = LabeledPointCloud([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]], [[0, 0, 1], [1, 0, 0]], [4, 5])
    restored = pickle.loads(pickle.dumps(cloud))
    np.testing.assert_array_equal(restored.positions, cloud.positions)
    assert restored.labels.tolist() == [4, 5]
    with pytest.raises(AttributeError):
        restored.labels = None


@pytest.mark.parametrize("workers", [1, 2])
def test_full_run_leaves_scene_untouched(floor_scene, workers):
    before = floor_scene.fingerprint()
    summary = run_pipeline(RunConfig(output_path="", thread_count=workers), scene=floor_scene)
    assert summary.exact_paths >= 1
    assert floor_scene.fingerprint() == before
