"""Tests for block partitioning, resampling, features and prediction assembly."""

import numpy as np
import pytest

from src.autodiff.rng import RngStream
from src.core.errors import ContractError, CoverageError, DimensionError
from src.data.blocks import (assemble_predictions, block_labels, chunk_for_evaluation, evaluation_blocks,
                             featurize, resample_to_4096, split_blocks, training_blocks)
from src.data.models import BLOCK_POINTS, PointCloud
from src.data.synthgen import generate_scene
from src.inference.sampling import SampleStack


def cloud_from_xy(xy):
    xy = np.asarray(xy, dtype=float)
    xyz = np.column_stack([xy, np.zeros(len(xy))])
    return PointCloud(xyz, np.zeros((len(xy), 3), dtype=np.uint8), np.zeros(len(xy), dtype=int))


class TestSplitBlocks:

    def test_two_cells(self):
        blocks = split_blocks(cloud_from_xy([[0.5, 0.5], [1.5, 0.5]]))
        assert [b.tolist() for b in blocks] == [[0], [1]]

    def test_partition_covers_each_point_once(self):
        gen = np.random.default_rng(0)
        cloud = cloud_from_xy(np.column_stack([gen.uniform(0, 3.7, 2000), gen.uniform(-1.2, 2.2, 2000)]))
        blocks = split_blocks(cloud)
        np.testing.assert_array_equal(np.sort(np.concatenate(blocks)), np.arange(2000))
        for members in blocks:
            extent = np.ptp(cloud.xyz[members, :2], axis=0)
            assert np.all(extent <= 1.0)

    def test_fractional_block_size_keeps_boundary_points(self):
        blocks = split_blocks(cloud_from_xy([[0, 0], [0.6, 0], [1.0, 0]]), block_size=0.1, stride=0.1)
        assert sorted(np.concatenate(blocks).tolist()) == [0, 1, 2]
        assert len(blocks) == 3

    @pytest.mark.parametrize("block_size", [0.1, 0.3, 0.7])
    def test_fractional_grid_is_a_partition(self, block_size):
        gen = np.random.default_rng(4)
        grid = np.round(gen.integers(-20, 40, (1000, 2)) * 0.1, 10)
        cloud = cloud_from_xy(grid)
        blocks = split_blocks(cloud, block_size=block_size, stride=block_size)
        np.testing.assert_array_equal(np.sort(np.concatenate(blocks)), np.arange(1000))

    def test_overlapping_windows_cover_everything(self):
        gen = np.random.default_rng(1)
        cloud = cloud_from_xy(gen.uniform(0, 2.6, (500, 2)))
        blocks = split_blocks(cloud, block_size=1.0, stride=0.5)
        assert set(np.concatenate(blocks).tolist()) == set(range(500))
        assert sum(b.size for b in blocks) > 500

    @pytest.mark.parametrize("stride", [0.0, -1.0, 1.5])
    def test_invalid_stride(self, stride):
        with pytest.raises(ContractError):
            split_blocks(cloud_from_xy([[0, 0]]), block_size=1.0, stride=stride)


class TestResampling:

    def test_large_block_is_subsampled(self):
        indices = np.arange(5000) + 10
        out = resample_to_4096(indices, RngStream(0))
        assert out.shape == (BLOCK_POINTS,)
        assert np.unique(out).size == BLOCK_POINTS
        assert np.isin(out, indices).all()

    def test_small_block_keeps_every_point(self):
        indices = np.arange(100)
        out = resample_to_4096(indices, RngStream(0))
        assert out.shape == (BLOCK_POINTS,)
        np.testing.assert_array_equal(out[:100], indices)
        assert np.isin(out, indices).all()

    def test_exact_block_is_unchanged(self):
        indices = np.arange(BLOCK_POINTS)[::-1]
        np.testing.assert_array_equal(resample_to_4096(indices, RngStream(0)), indices)

    def test_evaluation_chunks_cover_every_point(self):
        indices = np.arange(5000)
        chunks = chunk_for_evaluation(indices, RngStream(3))
        assert len(chunks) == 2
        assert all(chunk.shape == (BLOCK_POINTS,) for chunk in chunks)
        assert set(np.concatenate(chunks).tolist()) == set(indices.tolist())

    def test_empty_block(self):
        with pytest.raises(ContractError):
            resample_to_4096(np.array([], dtype=int), RngStream(0))


class TestFeaturize:

    def test_feature_columns(self, make_cloud):
        cloud = make_cloud(n=300)
        indices = resample_to_4096(np.arange(300), RngStream(1))
        block = featurize(cloud, indices)
        xyz = cloud.xyz[indices]
        np.testing.assert_allclose(block.features[:, :3], xyz - xyz.mean(axis=0))
        np.testing.assert_allclose(block.features[:, 3:6], cloud.rgb[indices] / 255.0)
        np.testing.assert_array_equal(block.features[:, 6:], xyz)
        np.testing.assert_array_equal(block.labels, cloud.labels[indices])
        assert block.network_input().shape == (BLOCK_POINTS, 6)

    def test_indices_out_of_range(self, make_cloud):
        with pytest.raises(ContractError):
            featurize(make_cloud(n=10), np.full(BLOCK_POINTS, 10))

    def test_training_blocks(self, make_cloud, rng):
        cloud = make_cloud(n=300)
        blocks = training_blocks(cloud, rng)
        assert len(blocks) == 1
        assert block_labels(blocks).shape == (1, BLOCK_POINTS)

    def test_evaluation_covers_a_scene(self, small_spec, rng):
        cloud = generate_scene(small_spec)
        blocks = evaluation_blocks(cloud, rng)
        covered = np.unique(np.concatenate([b.indices for b in blocks]))
        np.testing.assert_array_equal(covered, np.arange(len(cloud)))


class TestAssemblePredictions:

    def setup_method(self):
        self.cloud = cloud_from_xy([[0.1, 0.1], [0.2, 0.2], [0.3, 0.3]])
        half = BLOCK_POINTS // 2
        self.first = featurize(self.cloud, np.repeat([0, 1], half))
        self.second = featurize(self.cloud, np.repeat([1, 2], half))
        self.first_stack = SampleStack(np.repeat([[[1.0, 0.0]], [[0.0, 1.0]]], half, axis=1).reshape(1, -1, 2))
        self.second_stack = SampleStack(np.repeat([[[1.0, 0.0]], [[0.5, 0.5]]], half, axis=1).reshape(1, -1, 2))

    def test_duplicates_are_averaged(self):
        stack = assemble_predictions(self.cloud, [self.first, self.second], [self.first_stack, self.second_stack])
        np.testing.assert_allclose(stack.values[0], [[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]])

    def test_uncovered_points(self):
        with pytest.raises(CoverageError):
            assemble_predictions(self.cloud, [self.first], [self.first_stack])

    def test_mismatched_inputs(self):
        with pytest.raises(DimensionError):
            assemble_predictions(self.cloud, [self.first, self.second], [self.first_stack])
        with pytest.raises(DimensionError):
            assemble_predictions(self.cloud, [self.first], [SampleStack(np.full((1, 10, 2), 0.5))])
