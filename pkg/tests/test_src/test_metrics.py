"""Tests for the confusion-matrix metrics."""

import math

import numpy as np
import pytest

from src.core.errors import ContractError, DimensionError
from src.evaluation.metrics import (METRICS_COLUMNS, ConfusionMatrix, accuracy, class_iou, class_ious,
                                    filtered_metrics, mean_iou, metrics_frame, metrics_row)


def brute_force_miou(labels, preds, num_classes):
    ious = []
    for c in range(num_classes):
        tp = sum(1 for g, p in zip(labels, preds) if g == c and p == c)
        union = sum(1 for g, p in zip(labels, preds) if g == c or p == c)
        if union:
            ious.append(tp / union)
    return sum(ious) / len(ious)


class TestConfusionMatrix:

    def test_worked_example(self):
        cm = ConfusionMatrix.from_labels([0, 0, 1, 1], [0, 1, 1, 1], 2)
        np.testing.assert_array_equal(cm.counts, [[1, 1], [0, 2]])
        assert accuracy(cm) == pytest.approx(0.75)
        assert class_ious(cm) == pytest.approx([0.5, 2 / 3])
        assert mean_iou(cm) == pytest.approx(7 / 12)

    def test_against_brute_force(self):
        gen = np.random.default_rng(0)
        for _ in range(20):
            labels = gen.integers(0, 5, 300)
            preds = np.where(gen.random(300) < 0.6, labels, gen.integers(0, 5, 300))
            cm = ConfusionMatrix.from_labels(labels, preds, 5)
            assert accuracy(cm) == pytest.approx(np.mean(labels == preds))
            assert mean_iou(cm) == pytest.approx(brute_force_miou(labels, preds, 5))

    def test_absent_class_is_excluded(self):
        cm = ConfusionMatrix.from_labels([0, 1, 1], [0, 1, 1], 4)
        assert class_iou(cm, 3) is None
        assert mean_iou(cm) == pytest.approx(1.0)

    def test_mean_iou_without_points(self):
        assert math.isnan(mean_iou(ConfusionMatrix(np.zeros((3, 3), dtype=np.int64))))

    def test_empty_matrix_has_no_accuracy(self):
        with pytest.raises(ContractError):
            accuracy(ConfusionMatrix.from_labels([], [], 3))

    def test_merge_adds_counts(self):
        a = ConfusionMatrix.from_labels([0, 1], [0, 0], 2)
        b = ConfusionMatrix.from_labels([1, 1], [1, 1], 2)
        merged = ConfusionMatrix.merge([a, b])
        np.testing.assert_array_equal(merged.counts, [[1, 0], [1, 2]])
        assert merged.total == 4

    def test_invalid_inputs(self):
        with pytest.raises(DimensionError):
            ConfusionMatrix.from_labels([0, 1], [0], 2)
        with pytest.raises(ContractError):
            ConfusionMatrix.from_labels([0, 2], [0, 1], 2)
        with pytest.raises(ContractError):
            ConfusionMatrix.from_labels([0, 1], [-1, 1], 2)


class TestFilteredMetrics:

    def test_accuracy_over_certain_points(self):
        acc, drop = filtered_metrics([0, 0, 1, 1], [0, 1, 1, 1], [True, False, True, True])
        assert acc == 1.0
        assert drop == pytest.approx(0.25)

    def test_everything_dropped(self):
        acc, drop = filtered_metrics([0, 1], [0, 1], [False, False])
        assert math.isnan(acc)
        assert drop == 1.0

    def test_mismatched_lengths(self):
        with pytest.raises(DimensionError):
            filtered_metrics([0, 1], [0, 1], [True])


def test_metrics_table_columns():
    cm = ConfusionMatrix.from_labels([0, 0, 1, 1], [0, 1, 1, 1], 2)
    frame = metrics_frame([metrics_row("room_1", "dropout", "predictive", cm, 1.0, 0.25)])
    assert list(frame.columns) == METRICS_COLUMNS
    row = frame.iloc[0]
    assert row['room'] == "room_1"
    assert row['accuracy'] == pytest.approx(0.75)
    assert row['miou'] == pytest.approx(7 / 12)
