import logging
from typing import Tuple

import numpy as np

from mqtt_ids.estimator import BaseEstimator, normalize_rows, one_hot

logger = logging.getLogger(__name__)


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def logistic_loss_and_gradient(params: np.ndarray, X: np.ndarray, Y: np.ndarray,
                               l2: float) -> Tuple[float, np.ndarray]:
    """One-vs-rest logistic loss, summed over classes and averaged over rows, plus (l2 / 2) * ||W||^2.

    `params` stacks the weights (n_features, n_classes) over a final bias row; `Y` is one-hot."""
    weights, bias = params[:-1], params[-1]
    z = X @ weights + bias
    loss = np.sum(np.logaddexp(0.0, z) - Y * z) / len(X) + 0.5 * l2 * np.sum(weights ** 2)
    residual = sigmoid(z) - Y
    gradient = np.vstack([X.T @ residual / len(X) + l2 * weights, residual.mean(axis=0)])
    return float(loss), gradient


class LogisticRegression(BaseEstimator):
    def __init__(self, l2: float = 1e-4, max_epochs: int = 1000, tol: float = 1e-6) -> None:
        super().__init__(l2=l2, max_epochs=max_epochs, tol=tol)
        self.params = np.zeros((0, 0))

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        self._set_shape(X, n_classes)
        l2, max_epochs, tol = (self.hyperparameters[name] for name in ("l2", "max_epochs", "tol"))
        Y = one_hot(y, n_classes)
        # Constant step 1/L, L bounding the curvature of the loss.
        augmented = np.hstack([X, np.ones((len(X), 1))])
        lipschitz = 0.25 * np.linalg.norm(augmented, 2) ** 2 / len(X) + l2
        step = 1.0 / lipschitz

        params = np.zeros((self.n_features + 1, n_classes))
        momentum_point = params
        for epoch in range(1, max_epochs + 1):
            _, gradient = logistic_loss_and_gradient(momentum_point, X, Y, l2)
            if np.linalg.norm(gradient) < tol:
                params = momentum_point
                logger.debug(f"Logistic regression converged after {epoch} epochs.")
                break
            previous = params
            params = momentum_point - step * gradient
            momentum_point = params + (epoch - 1) / (epoch + 2) * (params - previous)
        self.params = params

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return normalize_rows(sigmoid(X @ self.params[:-1] + self.params[-1]))

    def get_state(self) -> dict:
        return {"params": self.params.tolist()}

    def set_state(self, state: dict) -> None:
        self.params = np.array(state["params"], dtype=np.float64)
        self.n_features, self.n_classes = self.params.shape[0] - 1, self.params.shape[1]


class LinearSVM(BaseEstimator):
    """One-vs-rest hinge-loss SVM solved in the dual, one coordinate at a time; the bias is learned as the weight
    of a constant feature."""

    def __init__(self, C: float = 1.0, max_epochs: int = 1000, tol: float = 1e-3) -> None:
        super().__init__(C=C, max_epochs=max_epochs, tol=tol)
        self.weights = np.zeros((0, 0))

    def _fit_binary(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        C, max_epochs, tol = (self.hyperparameters[name] for name in ("C", "max_epochs", "tol"))
        diagonal = np.einsum('ij,ij->i', X, X)
        alpha = np.zeros(len(X))
        w = np.zeros(X.shape[1])
        for epoch in range(max_epochs):
            largest, smallest = -np.inf, np.inf
            for i in rng.permutation(len(X)):
                g = y[i] * (w @ X[i]) - 1.0
                a = alpha[i]
                if a == 0.0:
                    projected = min(g, 0.0)
                elif a == C:
                    projected = max(g, 0.0)
                else:
                    projected = g
                largest = max(largest, projected)
                smallest = min(smallest, projected)
                if projected != 0.0 and diagonal[i] > 0.0:
                    updated = min(max(a - g / diagonal[i], 0.0), C)
                    w += (updated - a) * y[i] * X[i]
                    alpha[i] = updated
            if largest - smallest < tol:
                break
        else:
            logger.warning(f"Linear SVM stopped after {max_epochs} epochs without reaching tolerance {tol}.")
        return w

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        self._set_shape(X, n_classes)
        rng = np.random.default_rng(seed)
        augmented = np.hstack([X, np.ones((len(X), 1))])
        self.weights = np.column_stack([self._fit_binary(augmented, np.where(y == k, 1.0, -1.0), rng)
                                        for k in range(n_classes)])

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights[:-1] + self.weights[-1]

    def get_state(self) -> dict:
        return {"weights": self.weights.tolist()}

    def set_state(self, state: dict) -> None:
        self.weights = np.array(state["weights"], dtype=np.float64)
        self.n_features, self.n_classes = self.weights.shape[0] - 1, self.weights.shape[1]
