from typing import Tuple

import numpy as np

from mqtt_ids.estimator import BaseEstimator

# Keeps each (queries x training rows x features) distance block near 32 MB.
_BLOCK_ELEMENTS = 4_000_000
_TIE_TOLERANCE = 1e-12


class KNearestNeighbors(BaseEstimator):
    """Euclidean k-NN. The i-th nearest neighbour votes 1/i for its class; ties between classes go to the smaller
    summed neighbour distance, then to the earlier class. Equidistant neighbours rank in training order."""

    def __init__(self, k: int = 5) -> None:
        super().__init__(k=k)
        self.X = np.zeros((0, 0))
        self.y = np.zeros(0, dtype=np.int64)

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        self._set_shape(X, n_classes)
        self.X = np.array(X, dtype=np.float64)
        self.y = np.array(y, dtype=np.int64)

    def _neighbors(self, queries: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        k = min(self.hyperparameters["k"], len(self.X))
        block = max(1, _BLOCK_ELEMENTS // max(1, len(self.X) * max(1, self.n_features)))
        indices, distances = [], []
        for start in range(0, len(queries), block):
            chunk = queries[start:start + block]
            squared = ((chunk[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            nearest = np.argsort(squared, axis=1, kind='stable')[:, :k]
            indices.append(nearest)
            distances.append(np.sqrt(np.take_along_axis(squared, nearest, axis=1)))
        if not indices:
            return np.zeros((0, k), dtype=np.int64), np.zeros((0, k))
        return np.vstack(indices), np.vstack(distances)

    def _votes(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        nearest, distances = self._neighbors(X)
        rows = np.repeat(np.arange(len(X)), nearest.shape[1])
        classes = self.y[nearest].ravel()
        votes = np.zeros((len(X), self.n_classes))
        summed_distance = np.zeros((len(X), self.n_classes))
        np.add.at(votes, (rows, classes), np.tile(1.0 / np.arange(1, nearest.shape[1] + 1), len(X)))
        np.add.at(summed_distance, (rows, classes), distances.ravel())
        return votes, summed_distance

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self._votes(X)[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes, summed_distance = self._votes(X)
        leading = votes >= votes.max(axis=1, keepdims=True) - _TIE_TOLERANCE
        candidate_distance = np.where(leading, summed_distance, np.inf)
        closest = leading & (candidate_distance <= candidate_distance.min(axis=1, keepdims=True))
        return np.argmax(closest, axis=1)

    def get_state(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist(), "n_classes": self.n_classes}

    def set_state(self, state: dict) -> None:
        self.X = np.array(state["X"], dtype=np.float64).reshape(len(state["y"]), -1)
        self.y = np.array(state["y"], dtype=np.int64)
        self.n_classes = state["n_classes"]
        self.n_features = self.X.shape[1]
