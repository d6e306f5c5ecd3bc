"""Tests for SGD with momentum."""

import numpy as np
import pytest

from src.autodiff import tensor as T
from src.autodiff.optim import SGDMomentum, sgd_momentum_step
from src.autodiff.tensor import Tensor
from src.core.errors import ContractError, DimensionError


class TestSgdMomentumStep:

    def test_two_steps_by_hand(self):
        w, g, v = np.array([1.0]), np.array([0.5]), np.zeros(1)
        sgd_momentum_step([w], [g], [v], lr=0.1, momentum=0.9)
        np.testing.assert_allclose(v, [0.5])
        np.testing.assert_allclose(w, [0.95])
        sgd_momentum_step([w], [g], [v], lr=0.1, momentum=0.9)
        np.testing.assert_allclose(v, [0.95])
        np.testing.assert_allclose(w, [0.855])

    def test_zero_momentum_is_plain_sgd(self):
        w, g, v = np.array([2.0, -1.0]), np.array([1.0, 1.0]), np.zeros(2)
        sgd_momentum_step([w], [g], [v], lr=0.5, momentum=0.0)
        np.testing.assert_allclose(w, [1.5, -1.5])

    def test_rejects_non_positive_lr(self):
        with pytest.raises(ContractError):
            sgd_momentum_step([np.ones(1)], [np.ones(1)], [np.zeros(1)], lr=0.0, momentum=0.9)

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sgd_momentum_step([np.ones(2)], [np.ones(3)], [np.zeros(2)], lr=0.1, momentum=0.9)


class TestSGDMomentum:

    def test_minimizes_quadratic(self):
        target = np.array([1.0, -2.0, 0.5])
        w = Tensor(np.zeros(3), requires_grad=True)
        optimizer = SGDMomentum([w], momentum=0.9)
        for _ in range(300):
            optimizer.zero_grad()
            T.tensor_sum(T.square(T.sub(w, target))).backward()
            optimizer.step(0.05)
        np.testing.assert_allclose(w.data, target, atol=1e-4)

    def test_parameters_without_gradient_stay_put(self):
        used = Tensor(np.ones(2), requires_grad=True)
        unused = Tensor(np.ones(2), requires_grad=True)
        optimizer = SGDMomentum([used, unused])
        T.tensor_sum(used).backward()
        optimizer.step(0.1)
        np.testing.assert_array_equal(unused.data, np.ones(2))
        np.testing.assert_allclose(used.data, np.full(2, 0.9))

    def test_zero_grad_clears_all(self):
        w = Tensor(np.ones(2), requires_grad=True)
        optimizer = SGDMomentum([w])
        T.tensor_sum(w).backward()
        optimizer.zero_grad()
        assert w.grad is None
