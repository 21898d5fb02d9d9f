import csv
import io

import numpy as np
import pytest

from srgcl.encoder import EncoderConfig, init_params
from srgcl.evaluation import (
    EvalReport,
    SingleClassFold,
    fit_linear_probe,
    fold_accuracies,
    kfold_evaluate,
    oracle_positive_experiment,
    train_and_evaluate,
)
from srgcl.selector import SelectionMode
from srgcl.trainer import TrainConfig

from conftest import motif_dataset

SMALL = EncoderConfig(layers=2, hidden_dim=8, embed_dim=8)


class TestLinearProbe:
    def test_separable_clusters(self):
        rng = np.random.default_rng(0)
        x = np.vstack([rng.normal(-3, 0.5, (40, 2)), rng.normal(3, 0.5, (40, 2))])
        y = np.repeat([0, 1], 40)
        assert fit_linear_probe(x, y).accuracy(x, y) == 1.0

    def test_one_hot_features(self):
        y = np.tile([0, 1, 2], 20)
        x = np.eye(3)[y]
        probe = fit_linear_probe(x[:45], y[:45])
        assert probe.accuracy(x[45:], y[45:]) == 1.0

    def test_uninformative_features(self):
        y = np.tile([0, 1], 50)
        x = np.ones((100, 4))
        assert abs(fit_linear_probe(x[:80], y[:80]).accuracy(x[80:], y[80:]) - 0.5) <= 0.1

    def test_single_class(self):
        with pytest.raises(SingleClassFold):
            fit_linear_probe(np.ones((4, 2)), np.zeros(4, int))

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal((30, 3)), rng.integers(0, 2, 30)
        a, b = fit_linear_probe(x, y), fit_linear_probe(x, y)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_agrees_with_direct_minimizer(self):
        # the accelerated descent should land near the optimum of the same penalized objective
        from scipy.optimize import minimize
        from scipy.special import log_softmax

        rng = np.random.default_rng(2)
        x = rng.standard_normal((60, 3))
        y = (x[:, 0] + 0.5 * rng.standard_normal(60) > 0).astype(int)
        l2 = 1e-2
        probe = fit_linear_probe(x, y, l2=l2, iters=3000)
        xs = (x - probe.mean) / probe.scale

        def objective(theta):
            w, b = theta[:6].reshape(3, 2), theta[6:]
            return -log_softmax(xs @ w + b, axis=1)[np.arange(60), y].mean() + 0.5 * l2 * np.sum(w**2)

        best = minimize(objective, np.zeros(8), method="BFGS", options={"gtol": 1e-10}).fun
        assert objective(np.concatenate([probe.weights.ravel(), probe.bias])) == pytest.approx(best, abs=1e-6)


class TestReport:
    def test_aggregates(self):
        grid = np.array([[1.0, 0.5], [0.5, 0.5]])
        rep = EvalReport(grid)
        np.testing.assert_allclose(rep.repeat_means, [0.75, 0.5])
        assert rep.mean == pytest.approx(0.625, abs=1e-12)
        assert rep.std == pytest.approx(0.125, abs=1e-12)

    def test_round_trip_and_csv(self):
        rep = EvalReport(np.array([[0.9, 0.8, 0.7]]), "abc", 1.0, {"x": 1})
        back = EvalReport.from_dict(rep.to_dict())
        np.testing.assert_array_equal(back.accuracies, rep.accuracies)
        rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
        assert len(rows) == 3 and float(rows[2]["accuracy"]) == 0.7


class TestKFold:
    def test_one_hot_labels_perfect(self):
        y = np.tile([0, 1], 10)
        row = fold_accuracies(np.eye(2)[y], y, folds=2, seed=0)
        assert row == [1.0, 1.0]

    def test_grid_shape_and_determinism(self):
        ds = motif_dataset()
        params = init_params(SMALL, 2, 0)
        a = kfold_evaluate(ds, params, folds=10, repeats=5, seed=3)
        b = kfold_evaluate(ds, params, folds=10, repeats=5, seed=3)
        assert a.accuracies.shape == (5, 10)
        np.testing.assert_array_equal(a.accuracies, b.accuracies)
        assert np.all((a.accuracies >= 0) & (a.accuracies <= 1))
        assert abs(a.mean - a.accuracies.mean(1).mean()) <= 1e-12

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            kfold_evaluate(motif_dataset(), init_params(SMALL, 2, 0), folds=1)


class TestTrainAndEvaluate:
    def _cfg(self, mode="topk"):
        cfg = TrainConfig(epochs=4, eval_every=2, batch_size=8)
        cfg.uppg.c = 6
        cfg.selector.mode = SelectionMode(mode)
        return cfg

    def test_checkpoints_recorded(self):
        rep, traces = train_and_evaluate(motif_dataset(), SMALL, self._cfg(), folds=2, repeats=2)
        assert rep.accuracies.shape == (2, 2)
        assert rep.extra["eval_epochs"] == [2, 4]
        assert rep.extra["last_mean"] == pytest.approx(rep.mean)
        assert rep.extra["best_mean"] >= rep.extra["last_mean"]
        assert len(traces) == 2

    def test_oracle_arm_a_is_baseline(self):
        ds = motif_dataset()
        a, b = oracle_positive_experiment(ds, SMALL, self._cfg(), seed=0, folds=2, repeats=2)
        plain, _ = train_and_evaluate(ds, SMALL, self._cfg("random"), folds=2, repeats=2, seed=0)
        np.testing.assert_array_equal(a.accuracies, plain.accuracies)
        assert b.extra["oracle"] is True
