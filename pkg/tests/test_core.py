import dataclasses

import numpy as np
import pytest

from oracles import brute_pixel_counts
from semgraph.core import (
    AttentionGraph,
    Fixation,
    Level,
    ObjectInfo,
    Scene,
    SemanticScanpath,
    ValidationError,
    attribute_key,
    validate_scene,
)


def two_object_scene():
    raster = np.zeros((10, 12), dtype=int)
    raster[1:4, 1:4] = 1
    raster[6:9, 5:11] = 2
    return Scene.from_raster("s", raster, {1: ["Touch"]})


def test_consistent_scene_has_no_violations():
    assert validate_scene(two_object_scene()) == []


def test_raster_label_missing_from_objects():
    s = two_object_scene()
    raster = s.label_raster.copy()
    raster[0, 0] = 5
    bad = Scene("s", s.width, s.height, raster, s.objects)
    assert validate_scene(bad) == ["raster label 5 missing from objects"]


def test_pixel_count_mismatch_against_brute_force_count():
    raster = np.zeros((6, 6), dtype=int)
    raster[0:3, 0:4] = 3  # 12 pixels
    truth = brute_pixel_counts(raster)
    assert truth == {3: 12}
    bad = Scene("p", 6, 6, raster, {3: ObjectInfo(3, frozenset(), 10)})
    problems = validate_scene(bad)
    assert len(problems) == 1
    assert problems[0].startswith("pixel_count mismatch for object 3")
    good = Scene("p", 6, 6, raster, {3: ObjectInfo(3, frozenset(), truth[3])})
    assert validate_scene(good) == []


def test_object_without_pixels_and_bad_shape():
    raster = np.zeros((4, 5), dtype=int)
    raster[0, 0] = 1
    scene = Scene("q", 4, 4, raster, {1: ObjectInfo(1, frozenset(), 1), 2: ObjectInfo(2, frozenset(), 3)})
    problems = validate_scene(scene)
    assert any("raster shape" in p for p in problems)
    assert "object 2 has no pixels in raster" in problems


def test_validate_is_idempotent_and_pure():
    s = two_object_scene()
    before = s.label_raster.copy()
    assert validate_scene(s) == validate_scene(s)
    assert np.array_equal(before, s.label_raster)


def test_from_raster_counts_pixels_and_rejects_unknown_attribute_ids():
    s = two_object_scene()
    assert s.objects[1].pixel_count == 9
    assert s.objects[2].pixel_count == 18
    with pytest.raises(ValidationError):
        Scene.from_raster("s", s.label_raster, {9: ["Smell"]})


@pytest.mark.parametrize(
    "attrs, key",
    [
        (["Watchability", "Touch"], "Touch & Watchability"),
        (["Touch", "Watchability"], "Touch & Watchability"),
        ([], "None"),
        (["Smell"], "Smell"),
    ],
)
def test_attribute_key_is_canonical(attrs, key):
    assert attribute_key(attrs) == key


def test_values_are_immutable():
    f = Fixation("i", "o", 0, 1.0, 2.0)
    with pytest.raises(dataclasses.FrozenInstanceError):
        f.x = 3.0
    s = two_object_scene()
    with pytest.raises(ValueError):
        s.label_raster[0, 0] = 7


def test_scanpath_rejects_adjacent_duplicates():
    with pytest.raises(ValidationError):
        SemanticScanpath("i", "o", Level.OBJECT, [1, 1], [(0, 0), (1, 1)])
    sp = SemanticScanpath("i", "o", "object", [1, 2, 1], [(0, 0), (1, 1), (2, 2)])
    assert sp.level is Level.OBJECT and len(sp) == 3


def test_graph_rejects_dangling_edges_and_bad_counts():
    with pytest.raises(ValidationError):
        AttentionGraph("i", Level.OBJECT, {1}, {(1, 2): 1}, 1)
    with pytest.raises(ValidationError):
        AttentionGraph("i", Level.OBJECT, {1, 2}, {(1, 2): 0}, 1)
