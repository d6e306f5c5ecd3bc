"""Shared fixtures: random streams, small clouds and tiny-input networks."""

import logging

import numpy as np
import pytest

from src.autodiff.rng import RngStream
from src.data.models import PointCloud
from src.data.synthgen import SceneSpec
from src.model.arch import NetConfig, init_params


@pytest.fixture(autouse=True)
def reset_package_logging():
    """The CLI reroutes the `src` logger hierarchy; undo that after every test."""
    yield
    for name in ("src", "uqcloud"):
        target = logging.getLogger(name)
        for handler in list(target.handlers):
            target.removeHandler(handler)
        target.setLevel(logging.NOTSET)
        target.propagate = True


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def make_net():
    """Build a freshly initialized network; float64 unless stated otherwise."""
    def build(regime="frequentist", num_classes=3, seed=7, dtype="float64", **overrides):
        cfg = NetConfig.for_regime(regime, num_classes, dtype=dtype, **overrides)
        return init_params(cfg, RngStream(seed))
    return build


@pytest.fixture
def make_cloud():
    """Random labeled cloud inside one 1 m x 1 m cell."""
    def build(n=300, num_classes=3, seed=0, labeled=True, source_id="room"):
        gen = np.random.default_rng(seed)
        xyz = np.column_stack([gen.uniform(0.05, 0.95, n), gen.uniform(0.05, 0.95, n), gen.uniform(0.0, 2.0, n)])
        labels = gen.integers(0, num_classes, n) if labeled else None
        rgb = gen.integers(0, 256, (n, 3))
        return PointCloud(xyz, rgb, labels, source_id=source_id)
    return build


@pytest.fixture
def small_spec():
    return SceneSpec(extents=(2.5, 2.0, 1.5), points_per_class=200, seed=3)


@pytest.fixture
def points_input():
    """B×N×6 network input with a small point count."""
    def build(batch=2, points=8, seed=0, dtype=np.float64):
        gen = np.random.default_rng(seed)
        xyz = gen.uniform(-0.5, 0.5, (batch, points, 3))
        rgb = gen.uniform(0.0, 1.0, (batch, points, 3))
        return np.concatenate([xyz, rgb], axis=-1).astype(dtype)
    return build
