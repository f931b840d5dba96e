import math

import numpy as np
import pytest

import leap_ncde as ln


def test_presets_and_overrides():
    assert "toy" in ln.RunConfig.preset_names()
    cfg = ln.RunConfig.preset("toy")
    cfg.set("train.alpha", "0.25")
    assert cfg.entries()["train.alpha"] == "0.25"
    back = ln.RunConfig.parse(cfg.to_ini())
    assert back.entries() == cfg.entries()
    with pytest.raises(ln.ConfigError):
        cfg.set("train.nope", "1")
    with pytest.raises(ln.ConfigError):
        ln.RunConfig.preset("missing")


def test_train_evaluate_and_checkpoint(tmp_path):
    cfg = ln.RunConfig.preset("toy")
    cfg.set("train.max_iter", "2")
    exp = ln.Experiment(cfg)
    model = exp.build_model(seed=1)
    result = exp.train(model, seed=1)
    assert len(result["history"]) == 2
    assert result["divergence"] is None
    metrics = exp.evaluate(model)
    assert metrics["metric"] == "accuracy"
    assert 0.0 <= metrics["value"] <= 1.0

    path = tmp_path / "model.txt"
    model.save(str(path))
    again = ln.Model.load(str(path))
    assert again.kind == "leap"
    for name, value in model.parameters().items():
        np.testing.assert_array_equal(again.parameters()[name], value)
    assert exp.evaluate(again) == metrics


def test_forecast_paths_hit_observations():
    cfg = ln.RunConfig.preset("toy_forecast")
    cfg.set("data.drop", "0")
    exp = ln.Experiment(cfg)
    model = exp.build_model()
    metrics = exp.evaluate(model, split="all")
    assert metrics["step_errors"].shape == (len(exp), 5)
    sample = exp.sample_ids[0]
    knots = int(cfg.entries()["data.length"])
    paths = exp.export_paths(model, sample, grid_size=knots)
    assert paths["x"].shape == (knots, 2)
    np.testing.assert_allclose(paths["t"], np.arange(knots, dtype=float))
    with pytest.raises(ln.DataError):
        exp.export_paths(model, "no-such-sample")


def test_spline_reproduces_lines():
    t = [0.0, 0.5, 1.7, 3.0]
    v, dv = ln.natural_cubic(t, [1.0 + 2.0 * s for s in t], [0.25, 2.2])
    np.testing.assert_allclose(v, [1.5, 5.4], atol=1e-12)
    np.testing.assert_allclose(dv, [2.0, 2.0], atol=1e-12)


def test_statistics():
    t, p = ln.paired_ttest([1, 2, 3, 4], [0, 0, 0, 0])
    assert math.isclose(t, 3.873, abs_tol=1e-3)
    assert p > 0.95
    assert ln.auroc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
