"""Tests for the analytic planar-scene oracle."""

import math

import numpy as np
import pytest

from src.core.errors import InvalidParameterError, SceneFormatError
from src.tools.oracle import (
    BUILDERS,
    PlanarScene,
    Rectangle,
    box_room,
    dump_planar_scene,
    fermat_diffraction_point,
    image_method_paths,
    load_planar_scene,
    match_paths,
    planar_scene_from_dict,
    sample_planar_scene,
    screen_with_edge,
    single_diffraction_paths,
    to_scene,
)
from src.tools.refine import ExactPath, PathNode, path_length, verify_reflection_law
from src.tools.scene import DiffractionEdge


@pytest.fixture
def floor_plane():
    floor = Rectangle((-1, -1, 0), (3, 0, 0), (0, 2, 0), 1)
    return PlanarScene((floor,), (), (0, 0, 1), (1, 0, 1))


def shifted(path: ExactPath, offset) -> ExactPath:
    node = path.nodes[0]
    moved = PathNode(node.kind, node.position + np.asarray(offset), node.label, node.axis)
    points = [path.tx_position, moved.position, path.rx_position]
    return ExactPath(path.tx_id, path.rx_id, path.tx_position, path.rx_position, (moved,), path_length(points))


# ==================== Image method ====================


def test_single_plane_mirror_point(floor_plane):
    paths = image_method_paths(floor_plane, 1)
    assert [len(p.nodes) for p in paths] == [0, 1]
    reflection = paths[1]
    np.testing.assert_allclose(reflection.nodes[0].position, [0.5, 0, 0], atol=1e-12)
    assert reflection.total_length == pytest.approx(math.sqrt(5.0), abs=1e-12)
    assert reflection.label_chain == (1,)


def test_box_room_first_order_has_every_wall():
    paths = image_method_paths(box_room(), 1)
    assert len(paths) == 7
    assert sorted(p.label_chain for p in paths if p.nodes) == [(i,) for i in range(1, 7)]


def test_order_zero_is_los_only_when_unoccluded():
    assert len(image_method_paths(box_room(), 0)) == 1
    assert image_method_paths(screen_with_edge(), 0) == []


def test_image_order_is_bounded(floor_plane):
    with pytest.raises(InvalidParameterError):
        image_method_paths(floor_plane, 4)


def test_image_paths_obey_reflection_law():
    paths = image_method_paths(box_room(), 3)
    assert any(len(p.nodes) == 3 for p in paths)
    for path in paths:
        assert verify_reflection_law(path, 1e-8)
        assert all(a != b for a, b in zip(path.label_chain[:-1], path.label_chain[1:]))


def test_reflections_stay_inside_their_rectangles():
    scene = box_room()
    rects = {r.label: r for r in scene.rectangles}
    for path in image_method_paths(scene, 2):
        for node in path.nodes:
            assert rects[node.label].contains(node.position)


# ==================== Diffraction ====================


def test_fermat_point_symmetric_case():
    edge = DiffractionEdge((-1, 0, 0), (1, 0, 0), (0, 0, 1), (0, -1, 0), 100)
    q = fermat_diffraction_point(edge, (0, -1, 1), (0, 1, 1))
    np.testing.assert_allclose(q, [0, 0, 0], atol=1e-8)


def test_fermat_point_clamps_to_edge_end():
    edge = DiffractionEdge((-1, 0, 0), (1, 0, 0), (0, 0, 1), (0, -1, 0), 100)
    q = fermat_diffraction_point(edge, (5, 1, 0), (6, -1, 0))
    np.testing.assert_allclose(q, [1, 0, 0], atol=1e-8)


def test_fermat_point_beats_dense_scan():
    edge = DiffractionEdge((0, 0, 0), (2, 0, 0), (0, 0, 1), (0, -1, 0), 100)
    a, b = np.array([0.3, -1.0, 0.4]), np.array([1.7, 0.5, 2.0])
    q = fermat_diffraction_point(edge, a, b)

    def f(p):
        return np.linalg.norm(p - a) + np.linalg.norm(p - b)

    scan = min(f(edge.point_at(t)) for t in np.linspace(0.0, edge.length, 20001))
    assert f(q) <= scan + 1e-9


def test_fermat_point_satisfies_keller_condition():
    edge = DiffractionEdge((0, 0, 0), (2, 0, 0), (0, 0, 1), (0, -1, 0), 100)
    a, b = np.array([0.3, -1.0, 0.4]), np.array([1.7, 0.5, 2.0])
    q = fermat_diffraction_point(edge, a, b)
    incoming = (q - a) / np.linalg.norm(q - a)
    outgoing = (b - q) / np.linalg.norm(b - q)
    assert np.dot(incoming, edge.direction) == pytest.approx(
        np.dot(outgoing, edge.direction), abs=1e-6
    )


def test_screen_with_edge_single_diffraction():
    paths = single_diffraction_paths(screen_with_edge())
    assert len(paths) == 1
    path = paths[0]
    assert path.kind_sequence == ("diffraction",)
    np.testing.assert_allclose(path.nodes[0].position, [0, 0, 0], atol=1e-8)
    assert path.total_length == pytest.approx(math.sqrt(2.0) + math.sqrt(2.5), abs=1e-9)
    assert path.label_chain == (100,)


def test_transmitter_inside_the_solid_lights_no_edge():
    scene = screen_with_edge(tx=(0.0, 1.0, -1.0), rx=(0.0, 2.0, 0.5))
    assert single_diffraction_paths(scene) == []


# ==================== Matching ====================


def test_identical_lists_match_fully(floor_plane):
    reference = image_method_paths(floor_plane, 1)
    report = match_paths(list(reference), reference, math.radians(1.0))
    assert report.matched == [True, True]
    assert report.percent_matched == 100.0
    assert report.max_position_error == 0.0


def test_missing_path_is_reported(floor_plane):
    reference = image_method_paths(floor_plane, 1)
    report = match_paths(reference[:1], reference, math.radians(1.0))
    assert report.matched_count == 1
    assert report.percent_matched == 50.0
    assert report.assignment[1] is None


def test_direction_tolerance_decides_match(floor_plane):
    reference = [p for p in image_method_paths(floor_plane, 1) if p.nodes]
    moved = [shifted(reference[0], (0.1, 0.0, 0.0))]
    assert match_paths(moved, reference, math.radians(1.0)).matched == [False]
    report = match_paths(moved, reference, math.radians(10.0))
    assert report.matched == [True]
    assert report.max_position_error == pytest.approx(0.1, abs=1e-12)


def test_empty_reference_counts_as_full_match():
    assert match_paths([], [], math.radians(1.0)).percent_matched == 100.0


# ==================== Sampling and builders ====================


def test_sample_count_follows_density():
    rect = Rectangle((0, 0, 0), (1, 0, 0), (0, 1, 0), 1)
    cloud = sample_planar_scene(PlanarScene((rect,)), 10000, seed=3)
    assert len(cloud) == 10000
    assert np.all((cloud.positions[:, :2] >= 0) & (cloud.positions[:, :2] <= 1))


def test_samples_lie_on_their_labelled_rectangle():
    scene = box_room()
    cloud = sample_planar_scene(scene, 200, seed=1)
    rects = {r.label: r for r in scene.rectangles}
    assert set(cloud.labels.tolist()) == set(rects)
    for point in cloud:
        rect = rects[int(point.label)]
        assert abs(np.dot(point.position - rect.corner, rect.normal)) < 1e-9
        np.testing.assert_allclose(point.normal, rect.normal)
        assert rect.contains(point.position)


def test_sampling_is_seeded():
    a = sample_planar_scene(box_room(), 100, seed=5)
    b = sample_planar_scene(box_room(), 100, seed=5)
    c = sample_planar_scene(box_room(), 100, seed=6)
    np.testing.assert_array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_sampling_rejects_non_positive_density():
    with pytest.raises(InvalidParameterError):
        sample_planar_scene(box_room(), 0)


def test_rectangle_validation():
    with pytest.raises(InvalidParameterError):
        Rectangle((0, 0, 0), (1, 0, 0), (1, 1, 0), 1)
    with pytest.raises(InvalidParameterError):
        Rectangle((0, 0, 0), (0, 0, 0), (0, 1, 0), 1)


def test_builders_produce_inward_walls():
    scene = box_room()
    center = np.array([2.0, 1.5, 1.25])
    for rect in scene.rectangles:
        assert np.dot(center - rect.corner, rect.normal) > 0
    assert set(BUILDERS) == {"box_room", "corridor", "screen_with_edge"}


def test_to_scene_carries_radios_and_edges():
    planar = screen_with_edge()
    scene = to_scene(planar, sample_planar_scene(planar, 100))
    assert scene.transmitters[0].id == "tx0"
    np.testing.assert_allclose(scene.receivers[0].position, planar.rx)
    assert len(scene.edges) == 1


def test_planar_scene_document(tmp_path):
    target = tmp_path / "planar.json"
    dump_planar_scene(screen_with_edge(), target)
    loaded = load_planar_scene(target)
    assert [r.label for r in loaded.rectangles] == [1, 2]
    assert loaded.edges[0].label == 100
    np.testing.assert_allclose(loaded.tx, [0, -1, -1])


def test_malformed_planar_document():
    with pytest.raises(SceneFormatError, match="invalid planar scene"):
        planar_scene_from_dict({"rectangles": [{"corner": [0, 0, 0]}], "tx": [0, 0, 0], "rx": [1, 1, 1]})
