import logging
import math
from typing import List, Optional, Tuple, Union

import numpy as np

from mqtt_ids.estimator import BaseEstimator

logger = logging.getLogger(__name__)

LEAF = -1


def weighted_gini(left_counts: np.ndarray, right_counts: np.ndarray) -> np.ndarray:
    """Size-weighted Gini impurity of the two sides of each candidate split. Counts are (candidates, classes)."""
    n_left = left_counts.sum(axis=-1)
    n_right = right_counts.sum(axis=-1)
    total = n_left + n_right
    gini_left = 1.0 - np.sum((left_counts / np.maximum(n_left, 1)[..., None]) ** 2, axis=-1)
    gini_right = 1.0 - np.sum((right_counts / np.maximum(n_right, 1)[..., None]) ** 2, axis=-1)
    return (n_left * gini_left + n_right * gini_right) / total


def best_threshold(x: np.ndarray, y: np.ndarray, n_classes: int) -> Optional[Tuple[float, float]]:
    """Best (impurity, threshold) over the midpoints between adjacent distinct values of `x`; the smallest
    threshold wins ties. None when `x` is constant."""
    order = np.argsort(x, kind='stable')
    xs = x[order]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None
    counts = np.zeros((len(x), n_classes))
    counts[np.arange(len(x)), y[order]] = 1.0
    left = np.cumsum(counts, axis=0)[:-1]
    right = left[-1] + counts[-1] - left
    impurity = np.where(valid, weighted_gini(left, right), np.inf)
    i = int(np.argmin(impurity))
    return float(impurity[i]), float((xs[i] + xs[i + 1]) / 2.0)


def best_split(X: np.ndarray, y: np.ndarray, n_classes: int,
               features: Optional[np.ndarray] = None) -> Optional[Tuple[int, float, float]]:
    """(feature, threshold, impurity) minimizing weighted Gini; earlier features win ties."""
    if features is None:
        features = np.arange(X.shape[1])
    best = None
    for feature in features:
        candidate = best_threshold(X[:, feature], y, n_classes)
        if candidate is not None and (best is None or candidate[0] < best[2]):
            best = (int(feature), candidate[1], candidate[0])
    return best


def resolve_max_features(max_features: Union[str, int, None], n_features: int) -> int:
    if max_features is None or max_features == "all":
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    return max(1, min(int(max_features), n_features))


class DecisionTree(BaseEstimator):
    """CART with Gini impurity. Nodes live in flat arrays; a node whose feature is LEAF is a leaf whose `value`
    row holds the training class distribution that reached it."""

    def __init__(self, min_samples_split: int = 2, max_depth: Optional[int] = None,
                 max_features: Union[str, int, None] = None) -> None:
        super().__init__(min_samples_split=min_samples_split, max_depth=max_depth, max_features=max_features)
        self.feature = np.zeros(0, dtype=np.int64)
        self.threshold = np.zeros(0)
        self.left = np.zeros(0, dtype=np.int64)
        self.right = np.zeros(0, dtype=np.int64)
        self.value = np.zeros((0, 0))

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        self._set_shape(X, n_classes)
        self._grow(X, y, n_classes, np.random.default_rng(seed))

    def _grow(self, X: np.ndarray, y: np.ndarray, n_classes: int, rng: np.random.Generator) -> None:
        min_samples_split = self.hyperparameters["min_samples_split"]
        max_depth = self.hyperparameters["max_depth"]
        n_subset = resolve_max_features(self.hyperparameters["max_features"], X.shape[1])

        feature: List[int] = []
        threshold: List[float] = []
        left: List[int] = []
        right: List[int] = []
        value: List[np.ndarray] = []

        def new_node(indices: np.ndarray) -> int:
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            counts = np.bincount(y[indices], minlength=n_classes).astype(np.float64)
            value.append(counts / counts.sum())
            return len(feature) - 1

        stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
        while stack:
            node, indices, depth = stack.pop()
            labels = y[indices]
            if (len(indices) < min_samples_split or np.all(labels == labels[0])
                    or (max_depth is not None and depth >= max_depth)):
                continue
            features = None
            if n_subset < X.shape[1]:
                features = np.sort(rng.choice(X.shape[1], n_subset, replace=False))
            split = best_split(X[indices], labels, n_classes, features)
            if split is None:
                continue
            split_feature, split_threshold, _ = split
            goes_left = X[indices, split_feature] <= split_threshold
            if goes_left.all() or not goes_left.any():
                continue
            feature[node], threshold[node] = split_feature, split_threshold
            left_indices, right_indices = indices[goes_left], indices[~goes_left]
            left[node] = new_node(left_indices)
            right[node] = new_node(right_indices)
            stack.append((right[node], right_indices, depth + 1))
            stack.append((left[node], left_indices, depth + 1))

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold, dtype=np.float64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=np.float64)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row lands in."""
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            internal = np.flatnonzero(self.feature[node] != LEAF)
            if len(internal) == 0:
                return node
            current = node[internal]
            goes_left = X[internal, self.feature[current]] <= self.threshold[current]
            node[internal] = np.where(goes_left, self.left[current], self.right[current])

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def get_state(self) -> dict:
        return {
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    def set_state(self, state: dict) -> None:
        self.n_features = state["n_features"]
        self.feature = np.array(state["feature"], dtype=np.int64)
        self.threshold = np.array(state["threshold"], dtype=np.float64)
        self.left = np.array(state["left"], dtype=np.int64)
        self.right = np.array(state["right"], dtype=np.int64)
        self.value = np.array(state["value"], dtype=np.float64)
        self.n_classes = self.value.shape[1]


class RandomForest(BaseEstimator):
    """Bagged CART trees choosing among a random feature subset at every split. Tree seeds are spawned from the
    forest seed, so each tree is reproducible on its own."""

    def __init__(self, n_trees: int = 100, max_features: Union[str, int, None] = "sqrt", bootstrap: bool = True,
                 min_samples_split: int = 2, max_depth: Optional[int] = None) -> None:
        super().__init__(n_trees=n_trees, max_features=max_features, bootstrap=bootstrap,
                         min_samples_split=min_samples_split, max_depth=max_depth)
        self.trees: List[DecisionTree] = []

    def _new_tree(self) -> DecisionTree:
        return DecisionTree(min_samples_split=self.hyperparameters["min_samples_split"],
                            max_depth=self.hyperparameters["max_depth"],
                            max_features=self.hyperparameters["max_features"])

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        self._set_shape(X, n_classes)
        self.trees = []
        for tree_seed in np.random.SeedSequence(seed).spawn(self.hyperparameters["n_trees"]):
            rng = np.random.default_rng(tree_seed)
            if self.hyperparameters["bootstrap"]:
                sample = rng.integers(0, len(X), size=len(X))
            else:
                sample = np.arange(len(X))
            tree = self._new_tree()
            tree._set_shape(X, n_classes)
            tree._grow(X[sample], y[sample], n_classes, rng)
            self.trees.append(tree)
        logger.debug(f"Grew {len(self.trees)} trees with {sum(t.node_count for t in self.trees)} nodes in total.")

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.mean([tree.decision_function(X) for tree in self.trees], axis=0)

    def get_state(self) -> dict:
        return {"trees": [tree.get_state() for tree in self.trees]}

    def set_state(self, state: dict) -> None:
        self.trees = []
        for tree_state in state["trees"]:
            tree = self._new_tree()
            tree.set_state(tree_state)
            self.trees.append(tree)
        self.n_features = self.trees[0].n_features
        self.n_classes = self.trees[0].n_classes
