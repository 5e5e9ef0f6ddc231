import numpy as np
import pytest

from sonotree.evaluation import (
    REFERENCE_ACCURACY,
    confusion,
    full_grid,
    mean_metric,
    metrics,
    roc_auc,
    roc_curve_points,
    stratified_kfold,
    trend_grid,
    write_results_csv,
)
from sonotree.numerics import ContractViolation, Rng


def brute_force_counts(y_true, y_pred, cls):
    tp = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p == cls)
    fp = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p == cls)
    fn = sum(1 for t, p in zip(y_true, y_pred) if t == cls and p != cls)
    tn = sum(1 for t, p in zip(y_true, y_pred) if t != cls and p != cls)
    return tp, fp, fn, tn


def brute_force_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestConfusion:
    def test_enumerated_example(self):
        counts = confusion([1, 1, 0, 0], [1, 0, 0, 0])
        assert counts.tp[1] == 1 and counts.fn[1] == 1
        assert counts.tn[1] == 2 and counts.fp[1] == 0

    def test_perfect_prediction(self):
        counts = confusion([0, 1, 0, 1], [0, 1, 0, 1])
        assert counts.fp[1] == counts.fn[1] == 0
        assert counts.fp[0] == counts.fn[0] == 0

    def test_flip_swaps_counts(self):
        y_true = [0, 1, 1, 0, 1]
        y_pred = [1, 1, 0, 0, 1]
        flipped = [1 - p for p in y_pred]
        a = confusion(y_true, y_pred)
        b = confusion(y_true, flipped)
        assert a.tp[1] == b.fn[1] and a.tn[1] == b.fp[1]

    def test_length_mismatch(self):
        with pytest.raises(ContractViolation):
            confusion([0, 1], [0])

    def test_matches_brute_force_on_random_instances(self):
        rng = Rng(12)
        for _ in range(100):
            n = 5 + rng.randint(40)
            y_true = [rng.randint(2) for _ in range(n)]
            y_pred = [rng.randint(2) for _ in range(n)]
            counts = confusion(y_true, y_pred, classes=[0, 1])
            for cls in (0, 1):
                tp, fp, fn, tn = brute_force_counts(y_true, y_pred, cls)
                assert (counts.tp[cls], counts.fp[cls],
                        counts.fn[cls], counts.tn[cls]) == (tp, fp, fn, tn)


class TestMetrics:
    def test_formula_example(self):
        # TP=2, FP=1, FN=1, TN=6 for the positive class
        y_true = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
        y_pred = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0]
        report = metrics(confusion(y_true, y_pred), positive=1)
        assert np.isclose(report.precision, 2 / 3)
        assert np.isclose(report.recall, 2 / 3)
        assert np.isclose(report.accuracy, 0.8)

    def test_no_positive_predictions_degenerate_zero(self):
        report = metrics(confusion([1, 0], [0, 0]), positive=1)
        assert report.precision == 0.0
        assert any("precision" in note for note in report.degenerate)

    def test_balanced_random_accuracy_half(self):
        rng = Rng(77)
        n = 10_000
        y_true = np.array([rng.randint(2) for _ in range(n)])
        y_pred = np.array([rng.randint(2) for _ in range(n)])
        report = metrics(confusion(y_true, y_pred))
        assert abs(report.accuracy - 0.5) <= 0.02

    def test_f1_consistent_with_precision_recall(self):
        rng = Rng(31)
        for _ in range(20):
            n = 20 + rng.randint(30)
            y_true = [rng.randint(2) for _ in range(n)]
            y_pred = [rng.randint(2) for _ in range(n)]
            counts = confusion(y_true, y_pred, classes=[0, 1])
            report = metrics(counts, positive=1)
            p, r = report.precision, report.recall
            if p + r > 0:
                tp = counts.tp[1]
                f1_pos = 2 * p * r / (p + r)
                # macro F1 must bracket the per-class F1 values
                assert report.f1_macro <= max(f1_pos, 1.0) + 1e-12

    def test_f1_weighted_between_min_and_max(self):
        rng = Rng(41)
        for _ in range(50):
            n = 20 + rng.randint(50)
            y_true = [rng.randint(2) for _ in range(n)]
            y_pred = [rng.randint(2) for _ in range(n)]
            counts = confusion(y_true, y_pred, classes=[0, 1])
            report = metrics(counts)
            f1s = []
            for cls in (0, 1):
                tp, fp, fn, _ = brute_force_counts(y_true, y_pred, cls)
                p = tp / (tp + fp) if tp + fp else 0.0
                r = tp / (tp + fn) if tp + fn else 0.0
                f1s.append(2 * p * r / (p + r) if p + r else 0.0)
            assert min(f1s) - 1e-12 <= report.f1_weighted <= max(f1s) + 1e-12

    def test_accuracy_equals_micro_recall(self):
        rng = Rng(43)
        y_true = [rng.randint(3) for _ in range(60)]
        y_pred = [rng.randint(3) for _ in range(60)]
        counts = confusion(y_true, y_pred, classes=[0, 1, 2])
        report = metrics(counts)
        micro_recall = sum(counts.tp.values()) / sum(
            counts.tp[c] + counts.fn[c] for c in counts.classes)
        assert np.isclose(report.accuracy, micro_recall)


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0

    def test_all_tied(self):
        assert roc_auc([0.5, 0.5], [1, 0]) == 0.5

    def test_matches_pairwise_oracle(self):
        rng = Rng(55)
        for trial in range(20):
            n = 20 + rng.randint(181)
            labels = [rng.randint(2) for _ in range(n)]
            if len(set(labels)) < 2:
                continue
            # quantized scores force ties
            scores = [round(rng.uniform(), 2) for _ in range(n)]
            fast = roc_auc(scores, labels)
            slow = brute_force_auc(scores, labels)
            assert abs(fast - slow) <= 1e-12

    def test_single_class_rejected(self):
        with pytest.raises(ContractViolation):
            roc_auc([0.1, 0.2], [1, 1])

    def test_curve_points_monotone(self):
        rng = Rng(60)
        scores = [rng.uniform() for _ in range(50)]
        labels = [rng.randint(2) for _ in range(50)]
        points = roc_curve_points(scores, labels)
        fprs = [p[0] for p in points]
        tprs = [p[1] for p in points]
        assert fprs == sorted(fprs) and tprs == sorted(tprs)
        assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)


class TestStratifiedKFold:
    def test_five_plus_five(self):
        ids = [f"s{i}" for i in range(10)]
        labels = [0] * 5 + [1] * 5
        plan = stratified_kfold(ids, labels, k=5, seed=1)
        for fold in plan.folds:
            assert len(fold) == 2
            fold_labels = sorted(plan.labels[i] for i in fold)
            assert fold_labels == [0, 1]

    def test_partition(self):
        ids = [f"s{i}" for i in range(23)]
        labels = [i % 2 for i in range(23)]
        plan = stratified_kfold(ids, labels, k=5, seed=3)
        collected = sorted(i for fold in plan.folds for i in fold)
        assert collected == sorted(ids)

    def test_deterministic(self):
        ids = [f"s{i}" for i in range(20)]
        labels = [i % 2 for i in range(20)]
        a = stratified_kfold(ids, labels, k=4, seed=9)
        b = stratified_kfold(ids, labels, k=4, seed=9)
        assert a.folds == b.folds

    def test_stratification_error_within_one(self):
        rng = Rng(70)
        ids = [f"s{i}" for i in range(37)]
        labels = [rng.randint(2) for _ in range(37)]
        while min(labels.count(0), labels.count(1)) < 5:
            labels = [rng.randint(2) for _ in range(37)]
        plan = stratified_kfold(ids, labels, k=5, seed=2)
        global_ratio = labels.count(1) / len(labels)
        for fold in plan.folds:
            ones = sum(plan.labels[i] for i in fold)
            expected = global_ratio * len(fold)
            assert abs(ones - expected) <= 1.0

    def test_small_class_rejected(self):
        with pytest.raises(ContractViolation):
            stratified_kfold(["a", "b", "c"], [0, 0, 1], k=2, seed=0)

    def test_train_test_disjoint(self):
        ids = [f"s{i}" for i in range(20)]
        labels = [i % 2 for i in range(20)]
        plan = stratified_kfold(ids, labels, k=4, seed=5)
        for fold in range(4):
            assert not set(plan.test_ids(fold)) & set(plan.train_ids(fold))


class TestGrids:
    def test_full_grid_shape(self):
        cells = full_grid()
        assert len(cells) == 4 * 2 * 2 * 2 * 2
        assert len({c.name for c in cells}) == len(cells)

    def test_trend_grid_references(self):
        by_name = {c.name: c for c in trend_grid()}
        assert by_name["full"].reference_accuracy == REFERENCE_ACCURACY["with_rag"]
        assert by_name["level1"].reference_accuracy == REFERENCE_ACCURACY["level1"]

    def test_results_csv_roundtrip(self, tmp_path):
        rows = [
            {"config": "a", "fold": 0, "accuracy": 0.9, "precision": 0.8,
             "recall": 0.7, "f1_macro": 0.75, "f1_weighted": 0.77,
             "roc_auc": 0.95},
            {"config": "a", "fold": "mean", "accuracy": 0.9, "precision": 0.8,
             "recall": 0.7, "f1_macro": 0.75, "f1_weighted": 0.77,
             "roc_auc": 0.95, "reference_accuracy": 0.99},
        ]
        path = tmp_path / "r.csv"
        write_results_csv(path, rows)
        text = path.read_text()
        assert "config,fold,accuracy" in text.splitlines()[0]
        assert mean_metric(rows, "a") == pytest.approx(0.9)
