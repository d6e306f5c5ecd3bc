"""Tests for Monte Carlo posterior predictive sampling."""

import numpy as np
import pytest

from src.autodiff.rng import RngStream
from src.core.errors import ContractError, DimensionError
from src.inference.sampling import SampleStack, mc_forward, predict, predictive_mean


class TestSampleStack:

    def test_shape_accessors(self):
        stack = SampleStack(np.full((4, 5, 2), 0.5))
        assert (stack.K, stack.P, stack.m) == (4, 5, 2)
        stack.validate()

    def test_rejects_bad_shapes(self):
        with pytest.raises(DimensionError):
            SampleStack(np.ones((3, 2)))
        with pytest.raises(ContractError):
            SampleStack(np.ones((0, 3, 2)))

    def test_validate_rows(self):
        with pytest.raises(ContractError):
            SampleStack(np.full((1, 3, 2), 0.6)).validate()
        with pytest.raises(ContractError):
            SampleStack(np.array([[[1.2, -0.2]]])).validate()

    def test_split_by_points(self):
        parts = SampleStack(np.full((2, 7, 3), 1 / 3)).split([4, 3])
        assert [p.P for p in parts] == [4, 3]


class TestPredict:

    def test_mean_and_argmax(self):
        values = np.array([[[0.6, 0.4], [0.2, 0.8]],
                           [[0.2, 0.8], [0.4, 0.6]]])
        stack = SampleStack(values)
        np.testing.assert_allclose(predictive_mean(stack), [[0.4, 0.6], [0.3, 0.7]])
        np.testing.assert_array_equal(predict(stack), [1, 1])

    def test_ties_go_to_lowest_class(self):
        np.testing.assert_array_equal(predict(SampleStack(np.full((1, 2, 3), 1 / 3))), [0, 0])


class TestMcForward:

    def test_frequentist_uses_one_sample(self, make_net, points_input):
        stack = mc_forward(make_net("frequentist"), points_input(batch=2), K=5, rng=RngStream(0))
        assert stack.K == 1
        assert stack.values.shape == (1, 16, 3)
        stack.validate()

    def test_needs_a_sample(self, make_net, points_input):
        with pytest.raises(ContractError):
            mc_forward(make_net("bayesian"), points_input(), K=0, rng=RngStream(0))

    def test_bayesian_samples_are_probabilities_and_differ(self, make_net, points_input):
        stack = mc_forward(make_net("bayesian"), points_input(batch=3), K=3, rng=RngStream(1), batch_size=2)
        assert stack.values.shape == (3, 24, 3)
        assert stack.regime == "bayesian"
        stack.validate()
        assert not np.array_equal(stack.values[0], stack.values[1])

    def test_threads_do_not_change_results(self, make_net, points_input):
        net = make_net("dropout")
        x = points_input(batch=3)
        serial = mc_forward(net, x, K=4, rng=RngStream(2), threads=1, batch_size=1)
        parallel = mc_forward(net, x, K=4, rng=RngStream(2), threads=3, batch_size=1)
        np.testing.assert_array_equal(serial.values, parallel.values)

    def test_bayesian_sample_shares_weights_across_batches(self, make_net, points_input):
        x = np.repeat(points_input(batch=1), 2, axis=0)
        stack = mc_forward(make_net("bayesian"), x, K=2, rng=RngStream(3), batch_size=1)
        for k in range(2):
            np.testing.assert_array_equal(stack.values[k, :8], stack.values[k, 8:])

    def test_dropout_masks_are_fresh_per_batch(self, make_net, points_input):
        x = np.repeat(points_input(batch=1), 2, axis=0)
        stack = mc_forward(make_net("dropout"), x, K=1, rng=RngStream(3), batch_size=1)
        assert not np.array_equal(stack.values[0, :8], stack.values[0, 8:])

    def test_rejects_bad_input(self, make_net):
        with pytest.raises(DimensionError):
            mc_forward(make_net(), np.zeros((8, 6)), K=1, rng=RngStream(0))
        with pytest.raises(ContractError):
            mc_forward(make_net(), np.zeros((1, 8, 6)), K=1, rng=RngStream(0), batch_size=0)

    def test_degenerate_variational_net_repeats_itself(self, make_net, points_input):
        net = make_net("bayesian")
        for layer in net.variational_layers():
            layer.delta_w.data[...] = -1e3
            layer.delta_b.data[...] = -1e3
        stack = mc_forward(net, points_input(batch=2), K=4, rng=RngStream(6), batch_size=1)
        for k in range(1, 4):
            np.testing.assert_array_equal(stack.values[k], stack.values[0])

    def test_stack_mean_converges(self, make_net, points_input):
        stack = mc_forward(make_net("dropout"), points_input(batch=1), K=400, rng=RngStream(8))
        full = stack.values.mean(axis=0)
        near = np.max(np.abs(stack.values[:200].mean(axis=0) - full))
        far = np.max(np.abs(stack.values[:10].mean(axis=0) - full))
        assert near < far

    def test_prefix_of_a_larger_stack(self, make_net, points_input):
        net, x = make_net("dropout"), points_input(batch=1)
        small = mc_forward(net, x, K=10, rng=RngStream(8))
        large = mc_forward(net, x, K=20, rng=RngStream(8))
        np.testing.assert_array_equal(small.values, large.values[:10])
