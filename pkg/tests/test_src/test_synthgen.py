"""Tests for the synthetic scene generator and the scene split."""

from dataclasses import replace

import numpy as np
import pytest

from src.core.errors import ContractError
from src.data.synthgen import BASE_COLORS, DEFAULT_CLASSES, SceneSpec, generate_scene, generate_scenes, \
    train_test_split


class TestSceneSpec:

    def test_class_counts_follow_ratios(self):
        spec = SceneSpec(points_per_class=200)
        assert [spec.class_count(i) for i in range(spec.num_classes)] == [200, 400, 200, 100, 200, 150]

    @pytest.mark.parametrize("overrides", [
        {'extents': (1.0, 4.0, 3.0)},
        {'extents': (6.0, 4.0, 0.4)},
        {'classes': ("floor", "sofa"), 'ratios': (1.0, 1.0)},
        {'classes': ("floor",), 'ratios': (1.0,)},
        {'ratios': (1.0, 1.0)},
        {'hole_probability': 1.5},
        {'points_per_class': 0},
    ])
    def test_validation(self, overrides):
        with pytest.raises(ContractError):
            SceneSpec(**overrides)

    def test_from_dict(self):
        spec = SceneSpec.from_dict({'classes': "floor, wall", 'points-per-class': "50", 'extents': "3,3,2",
                                    'comment': "ignored"})
        assert spec.classes == ("floor", "wall")
        assert spec.ratios == (1.0, 1.0)
        assert spec.points_per_class == 50
        assert spec.extents == (3.0, 3.0, 2.0)

    def test_from_dict_rejects_bad_numbers(self):
        with pytest.raises(ContractError, match="seed"):
            SceneSpec.from_dict({'seed': "abc"})


class TestGenerateScene:

    def test_deterministic(self, small_spec):
        a, b = generate_scene(small_spec), generate_scene(small_spec)
        np.testing.assert_array_equal(a.xyz, b.xyz)
        np.testing.assert_array_equal(a.rgb, b.rgb)
        np.testing.assert_array_equal(a.labels, b.labels)
        other = generate_scene(replace(small_spec, seed=4))
        assert not np.array_equal(a.xyz, other.xyz)

    def test_exact_class_counts(self, small_spec):
        cloud = generate_scene(small_spec)
        expected = [small_spec.class_count(i) for i in range(small_spec.num_classes)]
        np.testing.assert_array_equal(cloud.class_counts(small_spec.num_classes), expected)
        assert cloud.source_id == "scene_0003"

    def test_surfaces(self, small_spec):
        cloud = generate_scene(small_spec)
        W, D, H = small_spec.extents
        names = list(DEFAULT_CLASSES)
        floor = cloud.xyz[cloud.labels == names.index("floor")]
        ceiling = cloud.xyz[cloud.labels == names.index("ceiling")]
        wall = cloud.xyz[cloud.labels == names.index("wall")]
        np.testing.assert_array_equal(floor[:, 2], 0.0)
        np.testing.assert_array_equal(ceiling[:, 2], H)
        on_plane = (wall[:, 0] == 0.0) | (wall[:, 0] == W) | (wall[:, 1] == 0.0) | (wall[:, 1] == D)
        assert on_plane.all()

    def test_points_stay_inside_the_room(self, small_spec):
        xyz = generate_scene(small_spec).xyz
        W, D, H = small_spec.extents
        assert xyz.min() >= 0.0
        assert np.all(xyz.max(axis=0) <= [W, D, H])

    def test_colors_center_on_base_colors(self, small_spec):
        cloud = generate_scene(small_spec)
        for label, name in enumerate(small_spec.classes):
            mean = cloud.rgb[cloud.labels == label].astype(float).mean(axis=0)
            np.testing.assert_allclose(mean, BASE_COLORS[name], atol=4.0)

    def test_no_holes_when_disabled(self, small_spec):
        spec = replace(small_spec, hole_probability=0.0)
        assert len(generate_scene(spec)) == sum(spec.class_count(i) for i in range(spec.num_classes))

    def test_scene_series_uses_consecutive_seeds(self, small_spec):
        scenes = generate_scenes(small_spec, 3)
        assert [s.source_id for s in scenes] == ["scene_0003", "scene_0004", "scene_0005"]
        np.testing.assert_array_equal(scenes[1].xyz, generate_scene(replace(small_spec, seed=4)).xyz)


class TestTrainTestSplit:

    def test_sizes_and_order(self):
        items = list(range(8))
        train, test = train_test_split(items, 0.25, seed=1)
        assert len(train) == 6 and len(test) == 2
        assert sorted(train + test) == items
        assert train == sorted(train) and test == sorted(test)

    def test_same_seed_same_split(self):
        assert train_test_split(list(range(10)), 0.3, seed=5) == train_test_split(list(range(10)), 0.3, seed=5)

    @pytest.mark.parametrize("items, fraction", [([1], 0.5), ([1, 2, 3], 0.0), ([1, 2], 0.9)])
    def test_empty_side(self, items, fraction):
        with pytest.raises(ContractError):
            train_test_split(items, fraction)
