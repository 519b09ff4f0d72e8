import numpy as np
import pytest
from sklearn.metrics import f1_score

from arnet.datagen import gen_blobs, inject_symmetric, split_dataset
from arnet.errors import DataError
from arnet.evaluation import (
    Metrics,
    aggregate_runs,
    confusion_counts,
    evaluate,
    metrics_from_predictions,
    metrics_report_text,
    purity,
    slot_sweep,
)
from arnet.numkernel import seeded_rng
from arnet.objective import one_hot
from arnet.trainer import TrainConfig, train


class TestMetrics:
    def test_perfect_predictions(self):
        y = np.array([0, 1, 2, 1, 0])
        m = metrics_from_predictions(y, y, 3)
        assert m.accuracy == 1.0
        assert m.macro_f1 == 1.0
        np.testing.assert_array_equal(np.diag(m.confusion), [2, 2, 1])

    def test_hand_computed_degenerate_case(self):
        # confusion [[50, 0], [50, 0]]: acc 0.5, macro F1 = (2/3 + 0)/2 = 1/3
        y_true = np.array([0] * 50 + [1] * 50)
        y_pred = np.zeros(100, dtype=int)
        m = metrics_from_predictions(y_true, y_pred, 2)
        np.testing.assert_array_equal(m.confusion, [[50, 0], [50, 0]])
        assert m.accuracy == pytest.approx(0.5)
        assert m.macro_f1 == pytest.approx(1.0 / 3.0)
        assert m.precision[0] == pytest.approx(0.5)
        assert m.recall[0] == pytest.approx(1.0)

    def test_uniform_random_predictions_near_chance(self):
        rng = seeded_rng(1, "metrics")
        n = 40_000
        y_true = rng.integers(0, 4, size=n)
        y_pred = rng.integers(0, 4, size=n)
        m = metrics_from_predictions(y_true, y_pred, 4)
        # 99.99% binomial band around 0.25
        assert abs(m.accuracy - 0.25) < 4 * np.sqrt(0.25 * 0.75 / n)

    def test_matches_sklearn_macro_f1(self):
        rng = seeded_rng(2, "metrics")
        for trial in range(5):
            y_true = rng.integers(0, 5, size=200)
            y_pred = rng.integers(0, 5, size=200)
            m = metrics_from_predictions(y_true, y_pred, 5)
            reference = f1_score(y_true, y_pred, average="macro", zero_division=0)
            assert m.macro_f1 == pytest.approx(reference, abs=1e-12)

    def test_confusion_marginals(self):
        rng = seeded_rng(3, "metrics")
        y_true = rng.integers(0, 3, size=300)
        y_pred = rng.integers(0, 3, size=300)
        cm = confusion_counts(y_true, y_pred, 3)
        assert cm.sum() == 300
        np.testing.assert_array_equal(cm.sum(axis=1), np.bincount(y_true, minlength=3))
        np.testing.assert_array_equal(cm.sum(axis=0), np.bincount(y_pred, minlength=3))

    def test_bounds(self):
        rng = seeded_rng(4, "metrics")
        y_true = rng.integers(0, 3, size=50)
        y_pred = rng.integers(0, 3, size=50)
        m = metrics_from_predictions(y_true, y_pred, 3)
        assert 0.0 <= m.accuracy <= 1.0
        assert 0.0 <= m.macro_f1 <= 1.0


class TestEvaluate:
    def test_empty_split_rejected(self):
        ds = gen_blobs(seeded_rng(5, "data"), 50, 2, 2, separation=5.0)
        cfg = TrainConfig(method="ce", epochs=1, batch_size=32, seed=0)
        params, _, _ = train(cfg, ds)
        with pytest.raises(DataError):
            evaluate(params, ds, "test")

    def test_idempotent(self):
        ds = gen_blobs(seeded_rng(6, "data"), 100, 2, 2, separation=5.0)
        ds = split_dataset(ds, (0.8, 0.2), seeded_rng(6, "split"))
        cfg = TrainConfig(method="ce", epochs=2, batch_size=32, seed=0)
        params, _, _ = train(cfg, ds)
        a = evaluate(params, ds, "test")
        b = evaluate(params, ds, "test")
        assert a.accuracy == b.accuracy
        assert a.macro_f1 == b.macro_f1


class TestPurity:
    def test_onehot_clean_targets(self):
        y = np.array([0, 2, 1])
        assert purity(one_hot(y, 3), y) == 1.0

    def test_uniform_targets_tie_break(self):
        # perturbation-free uniform rows argmax to class 0
        t = np.full((6, 3), 1 / 3)
        y = np.array([0, 0, 1, 1, 2, 2])
        assert purity(t, y) == pytest.approx(2 / 6)

    def test_near_uniform_perturbed_targets_near_chance(self):
        rng = seeded_rng(7, "purity")
        n, k = 30_000, 4
        t = np.full((n, k), 1 / k) + rng.uniform(-1e-6, 1e-6, size=(n, k))
        t = t / t.sum(axis=1, keepdims=True)
        y = rng.integers(0, k, size=n)
        assert abs(purity(t, y) - 1 / k) < 4 * np.sqrt((1 / k) * (1 - 1 / k) / n)

    def test_noisy_onehot_targets_give_agreement_rate(self):
        ds = gen_blobs(seeded_rng(8, "data"), 2000, 4, 2, separation=4.0)
        noisy = inject_symmetric(ds, 0.4, seeded_rng(8, "noise"))
        agreement = float((noisy.y_noisy == noisy.y_clean).mean())
        assert purity(one_hot(noisy.y_noisy, 4), noisy.y_clean) == pytest.approx(agreement)


class TestAggregateRuns:
    def make(self, acc, f1=0.5):
        return Metrics(acc, f1, np.zeros(2), np.zeros(2), np.zeros(2), np.zeros((2, 2), dtype=int))

    def test_single_run(self):
        agg = aggregate_runs([self.make(0.7, 0.6)])
        assert agg["accuracy_mean"] == 0.7
        assert agg["accuracy_sd"] == 0.0

    def test_two_runs_mean(self):
        agg = aggregate_runs([self.make(0.4), self.make(0.6)])
        assert agg["accuracy_mean"] == pytest.approx(0.5)

    def test_permutation_invariant(self):
        runs = [self.make(0.1), self.make(0.5), self.make(0.9)]
        a = aggregate_runs(runs)
        b = aggregate_runs(runs[::-1])
        assert a == b

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            aggregate_runs([])


class TestSlotSweep:
    def make_ds(self):
        ds = gen_blobs(seeded_rng(9, "data"), 300, 2, 2, separation=5.0)
        return split_dataset(ds, (0.8, 0.2), seeded_rng(9, "split"))

    def sweep_config(self):
        return TrainConfig(
            method="arnet", epochs=2, batch_size=64, cache_capacity=128,
            lr=1e-3, seed=3, hidden_dim=8, latent_dim=4, tau=0.2,
        )

    def test_single_slot_count(self):
        rows = slot_sweep(self.sweep_config(), self.make_ds(), [4], n_seeds=1)
        assert len(rows) == 1
        assert rows[0]["slots"] == 4

    def test_row_per_slot_count(self):
        rows = slot_sweep(self.sweep_config(), self.make_ds(), [2, 4, 8], n_seeds=1)
        assert [r["slots"] for r in rows] == [2, 4, 8]
        for row in rows:
            assert 0.0 <= row["accuracy_mean"] <= 1.0

    def test_empty_slot_list_rejected(self):
        with pytest.raises(DataError):
            slot_sweep(self.sweep_config(), self.make_ds(), [], n_seeds=1)


class TestReportText:
    def test_key_value_layout(self):
        m = metrics_from_predictions(np.array([0, 1]), np.array([0, 1]), 2)
        text = metrics_report_text(m)
        assert "accuracy = 1.000000" in text
        assert "macro_f1 = 1.000000" in text
        assert "confusion_0 = 1,0" in text
