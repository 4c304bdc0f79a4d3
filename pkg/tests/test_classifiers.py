import json
import math

import numpy as np
import pytest

from mqtt_ids.bayes import GaussianNaiveBayes
from mqtt_ids.classifiers import (ClassifierKind, ClassifierSpec, DimensionMismatchException,
                                  InvalidHyperparameterException, InvalidModelFileException, SingleClassException,
                                  UnknownClassifierException, fit, load_model, parse_hyperparameter_overrides,
                                  predict, predict_many, predict_table, save_model)
from mqtt_ids.data import FeatureLevel
from mqtt_ids.dataset import FeatureTable
from mqtt_ids.linear import logistic_loss_and_gradient
from mqtt_ids.neighbors import KNearestNeighbors
from mqtt_ids.svm import KernelSVM, rbf_kernel, smo
from mqtt_ids.trees import DecisionTree, RandomForest, best_split

CLASSES = ["Benign", "Scan_A", "MQTT_BF"]

XOR_CORNERS = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_LABELS = np.array([0, 0, 1, 1])


def make_table(X: np.ndarray, labels, level: FeatureLevel = FeatureLevel.UNIFLOW) -> FeatureTable:
    columns = [f"f{i}" for i in range(X.shape[1])]
    labels = np.array(labels, dtype=object)
    return FeatureTable(level=level, columns=columns, data={name: X[:, i] for i, name in enumerate(columns)},
                        is_attack=(labels != "Benign").astype(np.int64), labels=labels, source="test.csv")


def blobs(seed: int, per_class: int = 20, spread: float = 1.0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 1.0], [0.0, 4.0, -1.0]])
    X = np.vstack([center + spread * rng.normal(size=(per_class, 3)) for center in centers])
    labels = [label for label in CLASSES for _ in range(per_class)]
    return X, labels


def knn_oracle(X_train, y_train, query, k, n_classes):
    distances = [sum((a - b) ** 2 for a, b in zip(row, query)) for row in X_train]
    ranked = sorted(range(len(X_train)), key=lambda i: distances[i])[:k]
    votes = [0.0] * n_classes
    summed = [0.0] * n_classes
    for rank, i in enumerate(ranked, start=1):
        votes[y_train[i]] += 1.0 / rank
        summed[y_train[i]] += math.sqrt(distances[i])
    best = max(votes)
    leading = [c for c in range(n_classes) if votes[c] >= best - 1e-12]
    return min(leading, key=lambda c: (summed[c], c)), votes


def test_WHEN_knn_predicts_THEN_matches_exhaustive_search():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n_rows, n_features = int(rng.integers(1, 40)), int(rng.integers(1, 4))
        k = int(rng.integers(1, 8))
        # Small integer grid so distances are exact and ties are frequent.
        X_train = rng.integers(0, 5, size=(n_rows, n_features)).astype(np.float64)
        y_train = rng.integers(0, 3, size=n_rows)
        queries = rng.integers(0, 5, size=(10, n_features)).astype(np.float64)
        knn = KNearestNeighbors(k=k)
        knn.fit(X_train, y_train, 3, seed=0)
        predicted = knn.predict(queries)
        scores = knn.decision_function(queries)
        for query, label, score in zip(queries, predicted, scores):
            expected_label, expected_votes = knn_oracle(X_train.tolist(), y_train.tolist(), query.tolist(), k, 3)
            assert label == expected_label
            assert np.allclose(score, expected_votes)


def gini(labels, n_classes):
    if not labels:
        return 0.0
    return 1.0 - sum((labels.count(c) / len(labels)) ** 2 for c in range(n_classes))


def test_WHEN_tree_splits_root_THEN_split_minimizes_weighted_gini():
    rng = np.random.default_rng(3)
    for _ in range(500):
        n_rows, n_features = int(rng.integers(2, 9)), int(rng.integers(1, 4))
        X = rng.integers(0, 4, size=(n_rows, n_features)).astype(np.float64)
        y = rng.integers(0, 3, size=n_rows)
        candidates = []
        for feature in range(n_features):
            values = sorted(set(X[:, feature]))
            for low, high in zip(values, values[1:]):
                threshold = (low + high) / 2.0
                left = [int(c) for c, v in zip(y, X[:, feature]) if v <= threshold]
                right = [int(c) for c, v in zip(y, X[:, feature]) if v > threshold]
                impurity = (len(left) * gini(left, 3) + len(right) * gini(right, 3)) / n_rows
                candidates.append((impurity, feature, threshold))

        split = best_split(X, y, 3)
        if not candidates:
            assert split is None
            continue
        lowest = min(impurity for impurity, _, _ in candidates)
        feature, threshold, impurity = split
        assert impurity == pytest.approx(lowest, abs=1e-12)
        assert (feature, threshold) in [(f, t) for i, f, t in candidates if i <= lowest + 1e-12]

        tree = DecisionTree()
        tree.fit(X, y, 3, seed=0)
        if len(set(y.tolist())) > 1:
            assert (tree.feature[0], tree.threshold[0]) == (feature, threshold)


def test_WHEN_forest_has_one_unsampled_tree_on_all_features_THEN_it_is_the_decision_tree():
    X, labels = blobs(5, spread=2.0)
    y = np.array([CLASSES.index(label) for label in labels])
    tree = DecisionTree()
    tree.fit(X, y, 3, seed=0)
    forest = RandomForest(n_trees=1, bootstrap=False, max_features="all")
    forest.fit(X, y, 3, seed=123)
    assert forest.trees[0].get_state() == tree.get_state()
    assert np.array_equal(forest.decision_function(X), tree.decision_function(X))


def test_WHEN_logistic_gradient_computed_THEN_matches_central_differences():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(25, 4))
    Y = np.eye(3)[rng.integers(0, 3, size=25)]
    params = rng.normal(size=(5, 3))
    _, gradient = logistic_loss_and_gradient(params, X, Y, l2=0.1)
    step = 1e-6
    numeric = np.zeros_like(params)
    for index in np.ndindex(params.shape):
        shift = np.zeros_like(params)
        shift[index] = step
        upper, _ = logistic_loss_and_gradient(params + shift, X, Y, l2=0.1)
        lower, _ = logistic_loss_and_gradient(params - shift, X, Y, l2=0.1)
        numeric[index] = (upper - lower) / (2 * step)
    assert np.allclose(gradient, numeric, rtol=1e-5, atol=1e-8)


def test_WHEN_rbf_svm_trained_on_xor_THEN_separates_it():
    corners = KernelSVM(C=10.0, gamma=1.0)
    corners.fit(XOR_CORNERS, XOR_LABELS, 2, seed=0)
    assert np.array_equal(corners.predict(XOR_CORNERS), XOR_LABELS)

    rng = np.random.default_rng(0)
    X = np.vstack([XOR_CORNERS + 0.05 * rng.normal(size=XOR_CORNERS.shape) for _ in range(10)])
    y = np.tile(XOR_LABELS, 10)
    svm = KernelSVM(C=10.0, gamma=1.0)
    svm.fit(X, y, 2, seed=0)
    assert np.array_equal(svm.predict(X), y)
    assert np.array_equal(svm.predict(XOR_CORNERS), XOR_LABELS)
    assert all(gap <= 1e-3 for gap in svm.kkt_gaps)


@pytest.mark.parametrize("kind", [kind.value for kind in ClassifierKind])
def test_WHEN_model_saved_and_loaded_THEN_predictions_identical(kind, tmp_path):
    X, labels = blobs(1)
    overrides = {"n_trees": 5} if kind == "rf" else {}
    model = fit(ClassifierSpec.create(kind, seed=4, **overrides), make_table(X, labels))
    path = tmp_path / "model.json"
    save_model(model, path, manifest={"seed": 4})

    loaded = load_model(path)
    expected_labels, expected_scores = predict_many(model, X)
    actual_labels, actual_scores = predict_many(loaded, X)
    assert list(actual_labels) == list(expected_labels)
    assert np.array_equal(actual_scores, expected_scores)
    assert loaded.classes == CLASSES
    assert json.loads(path.read_text())["manifest"] == {"seed": 4}


@pytest.mark.parametrize("kind", [kind.value for kind in ClassifierKind])
def test_WHEN_blobs_well_separated_THEN_every_classifier_learns_them(kind):
    X, labels = blobs(2, spread=0.5)
    overrides = {"n_trees": 10} if kind == "rf" else {}
    model = fit(ClassifierSpec.create(kind, **overrides), make_table(X, labels))
    assert np.mean(predict_table(model, make_table(X, labels)) == np.array(labels, dtype=object)) >= 0.95


def test_WHEN_same_seed_THEN_same_forest_and_other_seed_differs():
    X, labels = blobs(9, per_class=40, spread=3.0)
    table = make_table(X, labels)
    first = fit(ClassifierSpec.create("rf", seed=3, n_trees=5), table)
    again = fit(ClassifierSpec.create("rf", seed=3, n_trees=5), table)
    other = fit(ClassifierSpec.create("rf", seed=4, n_trees=5), table)
    assert first.estimator.get_state() == again.estimator.get_state()
    assert first.estimator.get_state() != other.estimator.get_state()


def test_WHEN_single_row_predicted_THEN_scores_keyed_by_class():
    X, labels = blobs(6, spread=0.5)
    model = fit(ClassifierSpec.create("nb"), make_table(X, labels))
    label, scores = predict(model, [4.0, 0.0, 1.0])
    assert label == "Scan_A"
    assert list(scores) == CLASSES
    assert sum(scores.values()) == pytest.approx(1.0)


def test_WHEN_columns_reordered_THEN_prediction_unchanged():
    X, labels = blobs(8)
    table = make_table(X, labels)
    model = fit(ClassifierSpec.create("dt"), table)
    shuffled = FeatureTable(level=table.level, columns=list(reversed(table.columns)), data=table.data,
                            is_attack=table.is_attack, labels=table.labels)
    assert list(predict_table(model, shuffled)) == list(predict_table(model, table))


def test_WHEN_hyperparameter_invalid_THEN_rejected():
    with pytest.raises(InvalidHyperparameterException):
        ClassifierSpec.create("knn", k=0)
    with pytest.raises(InvalidHyperparameterException):
        ClassifierSpec.create("dt", n_trees=3)
    with pytest.raises(InvalidHyperparameterException):
        ClassifierSpec.create("rf", bootstrap="yes")
    with pytest.raises(UnknownClassifierException):
        ClassifierSpec.create("forest")


def test_WHEN_overrides_parsed_THEN_json_values_with_string_fallback():
    overrides = parse_hyperparameter_overrides(["k=3", "max_depth=null", "gamma=scale", "C=0.5", "bootstrap=false"])
    assert overrides == {"k": 3, "max_depth": None, "gamma": "scale", "C": 0.5, "bootstrap": False}
    with pytest.raises(ValueError):
        parse_hyperparameter_overrides(["k"])
    spec = ClassifierSpec.create("svm-rbf", seed=2, **parse_hyperparameter_overrides(["C=10", "gamma=1"]))
    assert spec.hyperparameters["C"] == 10 and spec.hyperparameters["gamma"] == 1
    assert spec.scaled and ClassifierSpec.from_dict(spec.to_dict()) == spec


def test_WHEN_training_rows_have_one_class_THEN_refused():
    X, _ = blobs(0, per_class=5)
    with pytest.raises(SingleClassException):
        fit(ClassifierSpec.create("lr"), make_table(X, ["Benign"] * len(X)))


def test_WHEN_feature_count_differs_THEN_dimension_mismatch():
    X, labels = blobs(0, per_class=5)
    model = fit(ClassifierSpec.create("knn", k=3), make_table(X, labels))
    with pytest.raises(DimensionMismatchException):
        predict_many(model, np.zeros((2, 5)))
    with pytest.raises(DimensionMismatchException):
        predict_table(model, make_table(np.zeros((2, 4)), ["Benign", "Scan_A"]))


def test_WHEN_model_file_invalid_THEN_data_error(tmp_path):
    path = tmp_path / "model.json"
    path.write_text("{")
    with pytest.raises(InvalidModelFileException):
        load_model(path)
    path.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(InvalidModelFileException):
        load_model(path)
    path.write_text(json.dumps({"format_version": 1, "spec": {"kind": "lr"}}))
    with pytest.raises(InvalidModelFileException):
        load_model(path)


def test_WHEN_naive_bayes_fit_on_two_points_per_class_THEN_closed_form_means_and_priors():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    nb = GaussianNaiveBayes()
    nb.fit(X, np.array([0, 0, 1, 1]), 2, seed=0)
    assert nb.means.tolist() == [[0.0], [1.0]]
    assert nb.priors.tolist() == [0.5, 0.5]

    model = fit(ClassifierSpec.create("nb"), make_table(X, ["Benign", "Benign", "Sparta", "Sparta"]))
    label, scores = predict(model, [0.1])
    assert label == "Benign"
    assert scores["Benign"] > 0.5


@pytest.mark.parametrize("estimator", [lambda: DecisionTree(), lambda: RandomForest(n_trees=15)])
def test_WHEN_feature_columns_rescaled_THEN_tree_predictions_unchanged(estimator):
    rng = np.random.default_rng(42)
    scales = np.array([1e3, 0.01, 7.0, 1e-4])
    for _ in range(10):
        X = rng.normal(size=(60, 4))
        y = (X[:, 0] + X[:, 1] * X[:, 2] > 0).astype(np.int64) + (X[:, 3] > 1.0)
        queries = np.vstack([X, rng.normal(size=(40, 4))])
        plain, scaled = estimator(), estimator()
        plain.fit(X, y, 3, seed=5)
        scaled.fit(X * scales, y, 3, seed=5)
        assert np.array_equal(plain.predict(queries), scaled.predict(queries * scales))


def test_WHEN_smo_converges_THEN_kkt_conditions_hold_within_tolerance():
    rng = np.random.default_rng(7)
    tol = 1e-3
    for _ in range(30):
        n_rows = int(rng.integers(4, 41))
        X = rng.normal(size=(n_rows, int(rng.integers(1, 4))))
        y = np.where(rng.random(n_rows) < 0.5, 1.0, -1.0)
        y[:2] = [1.0, -1.0]
        C = float(rng.choice([0.1, 1.0, 10.0]))
        K = rbf_kernel(X, X, float(rng.choice([0.5, 1.0, 2.0])))
        beta, bias, gap, converged = smo(lambda i: K[i], y, C, tol, max_iter=100000)
        assert converged and gap <= tol

        lower, upper = np.minimum(0.0, C * y), np.maximum(0.0, C * y)
        assert np.all(lower - 1e-12 <= beta) and np.all(beta <= upper + 1e-12)
        assert abs(beta.sum()) <= 1e-9
        g = y - K @ beta
        can_rise, can_fall = beta < upper, lower < beta
        assert g[can_rise].max(initial=-np.inf) - g[can_fall].min(initial=np.inf) <= tol + 1e-9
        free = can_rise & can_fall
        assert np.all(np.abs(g[free] - bias) <= tol)
