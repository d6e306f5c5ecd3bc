"""Tests for the segmentation network: shapes, initialization, T-Nets, gradients."""

import numpy as np
import pytest

from src.autodiff import tensor as T
from src.autodiff.rng import RngStream
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError, DimensionError
from src.model.arch import BLOCK_POINTS, NetConfig, init_params, seg_forward, tnet_forward
from src.model.losses import nll_loss
from src.model.mc_dropout import l2_penalty
from src.model.varbayes import Prior, elbo_loss, kl_tensor
from tests.gradcheck import check_gradients


def total_kl(net, prior=Prior()):
    layers = net.variational_layers()
    kl = kl_tensor(layers[0], prior)
    for layer in layers[1:]:
        kl = T.add(kl, kl_tensor(layer, prior))
    return kl


class TestNetConfig:

    def test_regime_defaults(self):
        assert NetConfig.for_regime("bayesian", 4).activation == "leaky_relu"
        assert NetConfig.for_regime("dropout", 4).activation == "relu"
        assert NetConfig.for_regime("frequentist", 4).effective_slope == 0.0
        assert NetConfig.for_regime("bayesian", 4).effective_slope == 0.01

    def test_round_trip_through_dict(self):
        cfg = NetConfig.for_regime("dropout", 5, dtype="float64")
        assert NetConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("overrides", [
        {'num_classes': 1},
        {'regime': 'ensemble'},
        {'activation': 'tanh'},
        {'slope': 1.0},
    ])
    def test_invalid_settings(self, overrides):
        values = {'num_classes': 3}
        values.update(overrides)
        with pytest.raises(ContractError):
            NetConfig(**values)


class TestInitialization:

    def test_tnets_start_as_identity(self, make_net, points_input):
        net = make_net("frequentist")
        x = Tensor(points_input())
        transform = tnet_forward(net.input_tnet, x)
        np.testing.assert_array_equal(transform.data, np.broadcast_to(np.eye(6), (2, 6, 6)))

    def test_bayesian_tnet_mean_is_identity(self, make_net, points_input):
        net = make_net("bayesian")
        transform = tnet_forward(net.input_tnet, Tensor(points_input()), slope=0.01)
        np.testing.assert_array_equal(transform.data, np.broadcast_to(np.eye(6), (2, 6, 6)))

    def test_kaiming_scale(self, make_net):
        net = make_net("frequentist", dtype="float32")
        weight = net.encoder[1].layer.weight.data
        assert weight.shape == (128, 1024)
        np.testing.assert_allclose(weight.std(), np.sqrt(2.0 / 128), rtol=0.05)
        np.testing.assert_array_equal(net.encoder[1].layer.bias.data, 0.0)

    def test_bayesian_adds_two_parameters_per_layer(self, make_net):
        frequentist = make_net("frequentist", activation="relu")
        bayesian = make_net("bayesian", activation="relu")
        layers = len(frequentist.weight_layers())
        assert layers == 19
        assert bayesian.parameter_count() - frequentist.parameter_count() == 2 * layers

    def test_parameter_names(self, make_net):
        frequentist = make_net("frequentist").named_parameters()
        bayesian = make_net("bayesian").named_parameters()
        assert {"conv.0.weight", "conv.0.bias", "conv.0.bn.gamma", "classifier.weight"} <= set(frequentist)
        assert {"conv.0.mu_w", "conv.0.delta_w", "head.2.mu_b", "input_tnet.out.delta_b"} <= set(bayesian)
        assert "input_tnet.fc.0.bn.gamma" not in frequentist

    def test_same_seed_same_weights(self, make_net):
        a, b = make_net(seed=3), make_net(seed=3)
        for name, tensor in a.named_parameters().items():
            np.testing.assert_array_equal(tensor.data, b.named_parameters()[name].data)


class TestForward:

    def test_output_shapes(self, make_net, points_input):
        net = make_net("frequentist", num_classes=4)
        scores, global_feature = net.forward_with_global(Tensor(points_input(batch=3, points=10)))
        assert scores.shape == (3, 10, 4)
        assert global_feature.shape == (3, 1024)

    def test_permuting_points_permutes_predictions(self, make_net, points_input):
        net = make_net("frequentist")
        x = points_input(batch=1, points=12)
        perm = np.random.default_rng(1).permutation(12)
        scores, global_feature = net.forward_with_global(Tensor(x))
        permuted_scores, permuted_global = net.forward_with_global(Tensor(x[:, perm]))
        np.testing.assert_allclose(permuted_global.data, global_feature.data, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(permuted_scores.data, scores.data[:, perm], rtol=1e-12, atol=1e-12)

    def test_seg_forward_requires_full_blocks(self, make_net, points_input):
        net = make_net()
        with pytest.raises(DimensionError, match=str(BLOCK_POINTS)):
            seg_forward(net, Tensor(points_input(points=8)))
        with pytest.raises(DimensionError):
            seg_forward(net, Tensor(np.zeros((1, BLOCK_POINTS, 5))))

    def test_wrong_channel_count(self, make_net):
        with pytest.raises(DimensionError):
            make_net().forward(Tensor(np.zeros((1, 8, 9))))

    def test_stochastic_pass_needs_stream(self, make_net, points_input):
        with pytest.raises(ContractError):
            make_net("bayesian").forward(Tensor(points_input()), sample=True)
        with pytest.raises(ContractError):
            make_net("dropout").forward(Tensor(points_input()), sample=True)

    def test_frequentist_ignores_sampling(self, make_net, points_input):
        net = make_net("frequentist")
        x = Tensor(points_input())
        np.testing.assert_array_equal(net.forward(x, sample=True).data, net.forward(x).data)

    def test_bayesian_samples_vary_and_replay(self, make_net, points_input):
        net = make_net("bayesian")
        x = Tensor(points_input())
        first = net.forward(x, rng=RngStream(1), sample=True).data
        again = net.forward(x, rng=RngStream(1), sample=True).data
        other = net.forward(x, rng=RngStream(2), sample=True).data
        np.testing.assert_array_equal(first, again)
        assert not np.array_equal(first, other)
        assert not np.array_equal(first, net.forward(x).data)

    def test_training_updates_running_statistics(self, make_net, points_input):
        net = make_net("frequentist")
        norm = net.conv1.norm
        before = norm.running_mean.copy()
        net.forward(Tensor(points_input()), training=True)
        assert not np.array_equal(norm.running_mean, before)
        frozen = norm.running_mean.copy()
        net.forward(Tensor(points_input()), training=False)
        np.testing.assert_array_equal(norm.running_mean, frozen)


class TestFullNetworkGradients:
    """Finite-difference checks on the layers nearest the loss, noise frozen."""

    @staticmethod
    def _inputs(points_input):
        x = Tensor(points_input(batch=2, points=8, seed=4))
        labels = np.random.default_rng(4).integers(0, 3, (2, 8))
        return x, labels

    @staticmethod
    def _head_params(net):
        head = net.head[2]
        return [net.classifier.layer.weight, net.classifier.layer.bias, head.layer.weight, head.norm.gamma,
                head.norm.beta]

    def test_frequentist_loss(self, make_net, points_input):
        net = make_net("frequentist")
        x, labels = self._inputs(points_input)

        def loss():
            return T.add(nll_loss(net.forward(x, training=True), labels), l2_penalty(net, 1e-3))
        check_gradients(loss, self._head_params(net))

    def test_dropout_loss(self, make_net, points_input):
        net = make_net("dropout")
        x, labels = self._inputs(points_input)

        def loss():
            return nll_loss(net.forward(x, rng=RngStream(5), training=True), labels)
        check_gradients(loss, self._head_params(net))

    def test_bayesian_loss(self, make_net, points_input):
        net = make_net("bayesian")
        x, labels = self._inputs(points_input)

        def loss():
            scores = net.forward(x, rng=RngStream(5), sample=True, training=True)
            return elbo_loss(scores, labels, total_kl(net), kl_weight=0.5, points_per_step=labels.size)
        classifier, head = net.classifier.layer, net.head[2].layer
        # |mu| has a kink at 0 in the KL term
        for mu in (classifier.mu_w, head.mu_w):
            mu.data[:] = np.where(np.abs(mu.data) < 0.02, np.copysign(0.02, mu.data), mu.data)
        check_gradients(loss, [classifier.mu_w, classifier.delta_w, head.mu_w])
