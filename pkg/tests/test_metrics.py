"""Accuracy, F1 flavors, and the confusion matrix against hand computations."""

import numpy as np
import pytest

from knn_calibrate import DataError, evaluate


class TestEvaluate:
    def test_perfect_predictions(self):
        report = evaluate([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert report.accuracy == 1.0
        assert report.macro_f1 == 1.0
        assert report.micro_f1 == 1.0

    def test_all_one_class_balanced_gold(self):
        # predict class 0 for everything on balanced 2-class gold:
        # class 0 gets P=0.5, R=1, F1=2/3; class 1 gets F1=0
        report = evaluate([0, 0, 0, 0], [0, 0, 1, 1], 2)
        assert report.accuracy == 0.5
        assert report.macro_f1 == pytest.approx(1.0 / 3.0)
        assert report.per_class_f1[0] == pytest.approx(2.0 / 3.0)
        assert report.per_class_f1[1] == 0.0

    def test_empty_gold_class_excluded_from_macro(self):
        # class 2 never appears in gold, so macro averages classes 0 and 1
        report = evaluate([0, 1, 0], [0, 1, 1], 3)
        f1_0 = report.per_class_f1[0]
        f1_1 = report.per_class_f1[1]
        assert report.macro_f1 == pytest.approx((f1_0 + f1_1) / 2.0)

    def test_confusion_layout(self):
        report = evaluate([1, 0, 1], [0, 0, 1], 2)
        # rows gold, columns predicted
        np.testing.assert_array_equal(report.confusion, [[1, 1], [0, 1]])
        assert report.accuracy == pytest.approx(2.0 / 3.0)
        assert report.n_examples == 3

    def test_accuracy_is_trace_over_n(self):
        rng = np.random.default_rng(0)
        gold = rng.integers(0, 4, size=200)
        preds = rng.integers(0, 4, size=200)
        report = evaluate(preds, gold, 4)
        assert report.accuracy == np.trace(report.confusion) / 200

    def test_length_mismatch(self):
        with pytest.raises(DataError, match="equal-length"):
            evaluate([0, 1], [0], 2)

    def test_label_out_of_range(self):
        with pytest.raises(DataError):
            evaluate([0, 5], [0, 1], 2)

    def test_deterministic(self):
        gold = [0, 1, 2, 0, 1]
        preds = [0, 2, 2, 0, 0]
        a = evaluate(preds, gold, 3)
        b = evaluate(preds, gold, 3)
        assert a.to_json() == b.to_json()

    def test_json_round_trip_fields(self):
        report = evaluate([0, 1], [1, 1], 2)
        payload = report.to_dict()
        assert set(payload) == {
            "accuracy",
            "macro_f1",
            "micro_f1",
            "per_class_precision",
            "per_class_recall",
            "per_class_f1",
            "n_examples",
            "confusion",
        }
        assert payload["confusion"] == report.confusion.tolist()
