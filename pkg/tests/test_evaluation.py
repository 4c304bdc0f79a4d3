from unittest.mock import patch

import numpy as np
import pytest

from mqtt_ids import classifiers
from mqtt_ids.classifiers import ClassifierKind, ClassifierSpec
from mqtt_ids.data import FeatureLevel
from mqtt_ids.dataset import FeatureTable
from mqtt_ids.estimator import BaseEstimator
from mqtt_ids.evaluation import (ConfusionMatrix, EmptyMatrixException, EvalReport, InsufficientClassRowsException,
                                 LengthMismatchException, confusion_matrix, cross_validate, holdout_evaluate,
                                 overall_accuracy, per_class_metrics, stratified_folds, weighted_average)

LABELS = ["Benign", "Scan_A", "Scan_sU", "Sparta", "MQTT_BF", "Unknown"]


class AlwaysFirstClass(BaseEstimator):
    def fit(self, X, y, n_classes, seed):
        self._set_shape(X, n_classes)

    def decision_function(self, X):
        scores = np.zeros((len(X), self.n_classes))
        scores[:, 0] = 1.0
        return scores

    def get_state(self):
        return {"n_classes": self.n_classes}

    def set_state(self, state):
        self.n_classes = state["n_classes"]


def make_table(n_benign: int, n_attack: int) -> FeatureTable:
    rng = np.random.default_rng(n_benign * 1000 + n_attack)
    labels = np.array(["Benign"] * n_benign + ["MQTT_BF"] * n_attack, dtype=object)
    shift = np.where(labels == "Benign", 0.0, 5.0)
    data = {"f0": rng.normal(size=len(labels)) + shift, "f1": rng.normal(size=len(labels))}
    return FeatureTable(level=FeatureLevel.BIFLOW, columns=["f0", "f1"], data=data,
                        is_attack=(labels != "Benign").astype(np.int64), labels=labels)


def test_WHEN_random_matrices_scored_THEN_metric_identities_hold():
    rng = np.random.default_rng(2020)
    for _ in range(1000):
        n_classes = int(rng.integers(1, len(LABELS) + 1))
        counts = rng.integers(0, 10_001, size=(n_classes, n_classes))
        counts[0, 0] += 1
        cm = ConfusionMatrix(LABELS[:n_classes], counts)
        per_class = per_class_metrics(cm)
        precision, recall, f1 = weighted_average(per_class, cm)

        assert abs(recall - overall_accuracy(cm)) <= 1e-12
        assert overall_accuracy(cm) == pytest.approx(np.trace(counts) / counts.sum())
        assert sum(metrics.support for metrics in per_class.values()) == cm.total
        for metrics in per_class.values():
            assert 0.0 <= metrics.precision <= 1.0 and 0.0 <= metrics.recall <= 1.0
            if metrics.precision + metrics.recall > 0:
                harmonic = 2 * metrics.precision * metrics.recall / (metrics.precision + metrics.recall)
                assert metrics.f1 == pytest.approx(harmonic, abs=1e-12)
            else:
                assert metrics.f1 == 0.0
        assert 0.0 <= precision <= 1.0 and 0.0 <= f1 <= 1.0


def test_WHEN_labels_tallied_THEN_confusion_matrix_counts_pairs():
    rng = np.random.default_rng(4)
    truth = rng.choice(LABELS, size=500)
    preds = rng.choice(LABELS, size=500)
    cm = confusion_matrix(truth, preds)
    assert cm.classes == LABELS
    assert cm.total == 500
    for i, expected in enumerate(cm.classes):
        for j, predicted in enumerate(cm.classes):
            assert cm.counts[i, j] == int(np.sum((truth == expected) & (preds == predicted)))


def test_WHEN_class_never_predicted_THEN_precision_is_zero_not_error():
    cm = confusion_matrix(["Benign", "Sparta", "Sparta"], ["Benign", "Benign", "Benign"])
    metrics = per_class_metrics(cm)
    assert metrics["Sparta"].precision == 0.0
    assert metrics["Sparta"].recall == 0.0
    assert metrics["Sparta"].f1 == 0.0
    assert metrics["Benign"].precision == pytest.approx(1 / 3)


def test_WHEN_predicted_class_absent_from_truth_THEN_row_has_zero_support():
    cm = confusion_matrix(["Benign", "Benign"], ["Benign", "Scan_A"])
    assert cm.classes == ["Benign", "Scan_A"]
    assert cm.counts.tolist() == [[1, 1], [0, 0]]
    assert per_class_metrics(cm)["Scan_A"].support == 0


def test_WHEN_lengths_differ_or_empty_THEN_refused():
    with pytest.raises(LengthMismatchException):
        confusion_matrix(["Benign"], [])
    with pytest.raises(LengthMismatchException):
        confusion_matrix([], [])
    with pytest.raises(EmptyMatrixException):
        overall_accuracy(ConfusionMatrix(["Benign"], np.zeros((1, 1), dtype=np.int64)))


def test_WHEN_folds_assigned_THEN_each_class_spread_evenly():
    labels = np.array(["Benign"] * 23 + ["Sparta"] * 11 + ["MQTT_BF"] * 7, dtype=object)
    folds = stratified_folds(labels, 5, seed=1)
    for label in ("Benign", "Sparta", "MQTT_BF"):
        sizes = np.bincount(folds[labels == label], minlength=5)
        assert sizes.max() - sizes.min() <= 1
    totals = np.bincount(folds, minlength=5)
    assert totals.max() - totals.min() <= 1
    assert np.array_equal(stratified_folds(labels, 5, seed=1), folds)


def test_WHEN_class_smaller_than_fold_count_THEN_refused():
    labels = np.array(["Benign"] * 10 + ["Sparta"] * 3, dtype=object)
    with pytest.raises(InsufficientClassRowsException):
        stratified_folds(labels, 5, seed=0)
    with pytest.raises(ValueError):
        stratified_folds(labels, 1, seed=0)


@patch.dict(classifiers.ESTIMATOR_MAPPING, {ClassifierKind.NB: AlwaysFirstClass})
def test_WHEN_model_predicts_one_class_THEN_cross_validation_pools_its_mistakes():
    table = make_table(30, 10)
    report = cross_validate(ClassifierSpec.create("nb"), table, k=5, seed=3)
    assert report.overall_accuracy == pytest.approx(0.75)
    assert report.per_class["MQTT_BF"].recall == 0.0
    assert report.per_class["MQTT_BF"].precision == 0.0
    assert report.per_class["Benign"].recall == 1.0
    assert report.confusion.counts.tolist() == [[30, 0], [10, 0]]
    assert len(report.folds) == 5
    assert report.mean_fold_accuracy == pytest.approx(0.75)
    assert report.weighted_recall == pytest.approx(0.75)
    assert report.weighted_precision == pytest.approx(0.75 * 0.75)


def test_WHEN_classes_separable_THEN_cross_validation_near_perfect():
    report = cross_validate(ClassifierSpec.create("dt", seed=1), make_table(40, 40), k=4)
    assert report.overall_accuracy >= 0.95
    assert report.classifier_kind == "dt"
    assert report.level == FeatureLevel.BIFLOW


def test_WHEN_holdout_evaluated_THEN_only_test_rows_scored():
    report = holdout_evaluate(ClassifierSpec.create("knn", seed=2, k=3), make_table(40, 20), train_fraction=0.75)
    assert report.confusion.total == 15
    assert report.per_class["Benign"].support == 10
    assert report.per_class["MQTT_BF"].support == 5


def test_WHEN_report_serialized_THEN_restored_with_folds():
    report = cross_validate(ClassifierSpec.create("nb"), make_table(20, 10), k=3, seed=0)
    restored = EvalReport.from_dict(report.to_dict())
    assert restored.to_dict() == report.to_dict()
    assert restored.folds[0].overall_accuracy == report.folds[0].overall_accuracy
