"""Synthetic scenes through training, evaluation and uncertainty maps."""

import pandas as pd
import pytest

from src.scripts.uqcloud import run


@pytest.mark.slow
@pytest.mark.parametrize("model", ["frequentist", "dropout", "bayesian"])
def test_full_pipeline(tmp_path, model):
    env_file = str(tmp_path / "missing.env")
    spec = tmp_path / "room.spec"
    spec.write_text("extents = 3,2.5,2\npoints_per_class = 600\nscenes = 4\ntest_fraction = 0.25\n")
    data, ckpt, metrics = tmp_path / "scenes", tmp_path / f"{model}.ckpt", tmp_path / "metrics.csv"

    assert run(["synth", "--spec", str(spec), "--out", str(data), "--seed", "11"], env_file) == 0
    assert run(["train", "--model", model, "--data", str(data), "--out", str(ckpt), "--epochs", "3",
                "--batch-size", "4"], env_file) == 0
    assert run(["evaluate", "--ckpt", str(ckpt), "--data", str(data), "--k", "20", "--csv", str(metrics),
                "--sweep", "1,2,3", "--export-dir", str(tmp_path / "maps")], env_file) == 0

    table = pd.read_csv(metrics)
    plain = table[table['measure'] == "none"]
    assert len(plain) == 1
    assert 0.0 <= plain['accuracy'].iloc[0] <= 1.0
    assert (table['drop_rate'].between(0.0, 1.0)).all()
    expected = {"frequentist": 3, "dropout": 5, "bayesian": 5}[model]
    assert table['measure'].isin(["predictive", "aleatoric", "epistemic", "variance", "credible"]).sum() == expected
    assert len(list((tmp_path / "maps").glob("*.ply"))) == expected


@pytest.mark.slow
def test_same_seed_gives_identical_outputs(tmp_path):
    env_file = str(tmp_path / "missing.env")
    spec = tmp_path / "room.spec"
    spec.write_text("extents = 3,2.5,2\npoints_per_class = 400\nscenes = 4\ntest_fraction = 0.25\n")
    data = tmp_path / "scenes"
    assert run(["synth", "--spec", str(spec), "--out", str(data), "--seed", "5"], env_file) == 0

    outputs = []
    for name in ("first", "second"):
        ckpt, metrics = tmp_path / f"{name}.ckpt", tmp_path / f"{name}.csv"
        assert run(["train", "--model", "bayesian", "--data", str(data), "--out", str(ckpt), "--epochs", "2",
                    "--seed", "3"], env_file) == 0
        assert run(["evaluate", "--ckpt", str(ckpt), "--data", str(data), "--k", "20", "--csv", str(metrics),
                    "--seed", "3"], env_file) == 0
        outputs.append((ckpt.read_bytes(), metrics.read_bytes()))

    assert outputs[0] == outputs[1]
