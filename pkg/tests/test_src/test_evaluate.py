"""Tests for uncertainty-filtered evaluation."""

import numpy as np
import pandas as pd
import pytest

from src.autodiff.rng import RngStream
from src.core.errors import ContractError, IncompatibleMeasureError
from src.evaluation.metrics import METRICS_COLUMNS
from src.training.evaluate import Evaluator, evaluate, predict_cloud


class TestPredictCloud:

    def test_one_row_per_point(self, make_net, make_cloud):
        cloud = make_cloud(n=300)
        stack = predict_cloud(make_net("dropout"), cloud, K=2, rng=RngStream(0))
        assert stack.values.shape == (2, 300, 3)
        stack.validate()

    def test_same_stream_same_stack(self, make_net, make_cloud):
        net, cloud = make_net("dropout"), make_cloud(n=100)
        first = predict_cloud(net, cloud, 2, RngStream(4))
        second = predict_cloud(net, cloud, 2, RngStream(4))
        np.testing.assert_array_equal(first.values, second.values)


class TestEvaluator:

    def test_frequentist_uses_one_sample(self, make_net, make_cloud):
        evaluator = Evaluator(make_net("frequentist"), K=50)
        assert evaluator.K == 1
        assert evaluator.measures == ["predictive", "aleatoric", "epistemic"]

        result = evaluator.evaluate([make_cloud()], RngStream(0))
        table = result.table
        assert list(table.columns) == METRICS_COLUMNS
        assert table['measure'].tolist() == ["none", "predictive", "aleatoric", "epistemic"]
        assert (table['model'] == "frequentist").all()
        plain = table.iloc[0]
        assert plain['drop_rate'] == 0.0
        assert plain['filtered_accuracy'] == plain['accuracy']
        epistemic = table[table['measure'] == "epistemic"].iloc[0]
        assert epistemic['drop_rate'] == 0.0

    def test_dropout_measures_and_sweep(self, make_net, make_cloud):
        evaluator = Evaluator(make_net("dropout"), K=3, sweep=[1.0, 2.0, 3.0])
        assert evaluator.measures == ["predictive", "aleatoric", "epistemic", "variance"]
        table = evaluator.evaluate([make_cloud(source_id="room_a")], RngStream(1)).table
        assert len(table) == 1 + 4 + 4 * 3
        assert (table['room'] == "room_a").all()
        for measure in evaluator.measures:
            drops = table[table['measure'].str.startswith(f"{measure}@")]['drop_rate'].tolist()
            assert len(drops) == 3
            assert drops == sorted(drops, reverse=True)
        assert (table['accuracy'] == table['accuracy'].iloc[0]).all()

    def test_named_measure_needs_enough_samples(self, make_net):
        with pytest.raises(IncompatibleMeasureError, match="K >= 20"):
            Evaluator(make_net("dropout"), K=3, measures="credible")

    def test_unlabeled_scene(self, make_net, make_cloud):
        with pytest.raises(ContractError):
            Evaluator(make_net(), K=1).evaluate([make_cloud(labeled=False)], RngStream(0))

    def test_exports_uncertainty_maps(self, tmp_path, make_net, make_cloud):
        evaluator = Evaluator(make_net(), K=1, measures="predictive")
        result = evaluator.evaluate([make_cloud(source_id="room_b")], RngStream(0), export_dir=tmp_path)
        assert (tmp_path / "room_b_predictive.ply").exists()
        reports = result.reports()["room_b"]
        assert set(reports) == {"predictive"}
        assert reports["predictive"].certain.shape == (300,)


def test_evaluate_writes_csv(tmp_path, make_net, make_cloud):
    path = tmp_path / "metrics.csv"
    evaluate(make_net(), [make_cloud(source_id="r1"), make_cloud(seed=1, source_id="r2")], K=1,
             measures="all", sigmas=2.0, rng=RngStream(0), csv_path=path)
    table = pd.read_csv(path)
    assert list(table.columns) == METRICS_COLUMNS
    assert table['room'].tolist() == ["r1"] * 4 + ["r2"] * 4
