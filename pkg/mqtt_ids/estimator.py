from abc import ABC, abstractmethod

import numpy as np


class BaseEstimator(ABC):
    """A classifier over a dense float matrix and integer class codes 0..n_classes-1.

    Estimators are configured through keyword hyperparameters, trained by `fit` and persisted through
    `get_state`/`set_state`, which must round-trip exactly through json."""

    def __init__(self, **hyperparameters) -> None:
        self.hyperparameters = hyperparameters
        self.n_classes = 0
        self.n_features = 0

    @abstractmethod
    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        pass

    @abstractmethod
    def decision_function(self, X: np.ndarray) -> np.ndarray:
        """Per-class scores, shape (n_rows, n_classes)."""
        pass

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax takes the first maximum, so ties go to the earlier class.
        return np.argmax(self.decision_function(X), axis=1)

    @abstractmethod
    def get_state(self) -> dict:
        pass

    @abstractmethod
    def set_state(self, state: dict) -> None:
        pass

    def _set_shape(self, X: np.ndarray, n_classes: int) -> None:
        self.n_classes = n_classes
        self.n_features = X.shape[1]


def one_hot(y: np.ndarray, n_classes: int) -> np.ndarray:
    encoded = np.zeros((len(y), n_classes))
    encoded[np.arange(len(y)), y] = 1.0
    return encoded


def normalize_rows(scores: np.ndarray) -> np.ndarray:
    totals = scores.sum(axis=1, keepdims=True)
    uniform = np.full_like(scores, 1.0 / scores.shape[1])
    return np.where(totals > 0, scores / np.where(totals > 0, totals, 1.0), uniform)
