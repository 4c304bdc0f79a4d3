import logging
from collections import OrderedDict
from typing import Callable, List, Tuple, Union

import numpy as np

from mqtt_ids.estimator import BaseEstimator

logger = logging.getLogger(__name__)

# Above this many rows kernel rows are computed on demand instead of holding the full matrix.
FULL_KERNEL_MAX_ROWS = 4000
KERNEL_ROW_CACHE_SIZE = 512
_MIN_CURVATURE = 1e-12


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    squared = (np.einsum('ij,ij->i', A, A)[:, None] + np.einsum('ij,ij->i', B, B)[None, :] - 2.0 * A @ B.T)
    return np.exp(-gamma * np.maximum(squared, 0.0))


def scale_gamma(X: np.ndarray) -> float:
    """1 / (n_features * mean per-feature variance), or 1 when every feature is constant."""
    if X.shape[1] == 0:
        return 1.0
    mean_variance = float(X.var(axis=0).mean())
    return 1.0 / (X.shape[1] * mean_variance) if mean_variance > 0 else 1.0


class _KernelRows:
    def __init__(self, X: np.ndarray, gamma: float) -> None:
        self._X = X
        self._gamma = gamma
        self._full = rbf_kernel(X, X, gamma) if len(X) <= FULL_KERNEL_MAX_ROWS else None
        self._cache: OrderedDict = OrderedDict()

    def __call__(self, i: int) -> np.ndarray:
        if self._full is not None:
            return self._full[i]
        if i in self._cache:
            self._cache.move_to_end(i)
            return self._cache[i]
        row = rbf_kernel(self._X[i:i + 1], self._X, self._gamma)[0]
        self._cache[i] = row
        if len(self._cache) > KERNEL_ROW_CACHE_SIZE:
            self._cache.popitem(last=False)
        return row


def smo(kernel_row: Callable[[int], np.ndarray], y: np.ndarray, C: float, tol: float,
        max_iter: int) -> Tuple[np.ndarray, float, float, bool]:
    """Sequential minimal optimization with maximal violating pairs on the dual of a binary soft-margin SVM.

    Works with beta = y * alpha, bounded by min(0, C y) <= beta <= max(0, C y) and summing to zero; `g` is the
    gradient y - K beta. Returns (beta, bias, KKT gap, converged)."""
    beta = np.zeros(len(y))
    g = y.astype(np.float64).copy()
    lower = np.minimum(0.0, C * y)
    upper = np.maximum(0.0, C * y)
    iteration = 0
    while True:
        i = int(np.argmax(np.where(beta < upper, g, -np.inf)))
        j = int(np.argmin(np.where(lower < beta, g, np.inf)))
        gap = g[i] - g[j]
        if gap <= tol:
            converged = True
            break
        if iteration >= max_iter:
            converged = False
            break
        row_i, row_j = kernel_row(i), kernel_row(j)
        curvature = max(row_i[i] + row_j[j] - 2.0 * row_i[j], _MIN_CURVATURE)
        step = min(upper[i] - beta[i], beta[j] - lower[j], gap / curvature)
        g -= step * (row_i - row_j)
        beta[i] += step
        beta[j] -= step
        iteration += 1
    return beta, float((g[i] + g[j]) / 2.0), float(gap), converged


class KernelSVM(BaseEstimator):
    """One-vs-rest RBF-kernel SVM. Support vectors are shared across the per-class problems; `dual_coef` holds
    each class's beta over them and a class's margin is dual_coef[k] . K(x, sv) + intercept[k]."""

    def __init__(self, C: float = 1.0, gamma: Union[str, float] = "scale", tol: float = 1e-3,
                 max_iter: int = 100000) -> None:
        super().__init__(C=C, gamma=gamma, tol=tol, max_iter=max_iter)
        self.gamma_ = 1.0
        self.support_vectors = np.zeros((0, 0))
        self.dual_coef = np.zeros((0, 0))
        self.intercept = np.zeros(0)
        self.kkt_gaps: List[float] = []

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        self._set_shape(X, n_classes)
        C, gamma, tol, max_iter = (self.hyperparameters[name] for name in ("C", "gamma", "tol", "max_iter"))
        self.gamma_ = scale_gamma(X) if gamma == "scale" else float(gamma)
        kernel_row = _KernelRows(X, self.gamma_)

        betas, intercepts, self.kkt_gaps = [], [], []
        for k in range(n_classes):
            beta, bias, gap, converged = smo(kernel_row, np.where(y == k, 1.0, -1.0), C, tol, max_iter)
            if not converged:
                logger.warning(f"SVM for class {k} stopped after {max_iter} iterations with KKT gap {gap:.3g} "
                               f"above tolerance {tol}.")
            betas.append(beta)
            intercepts.append(bias)
            self.kkt_gaps.append(gap)

        betas = np.array(betas)
        support = np.flatnonzero(np.any(betas != 0.0, axis=0))
        self.support_vectors = X[support]
        self.dual_coef = betas[:, support]
        self.intercept = np.array(intercepts)
        logger.debug(f"RBF SVM kept {len(support)} of {len(X)} rows as support vectors.")

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return rbf_kernel(X, self.support_vectors, self.gamma_) @ self.dual_coef.T + self.intercept

    def get_state(self) -> dict:
        return {
            "gamma": self.gamma_,
            "n_features": self.n_features,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "intercept": self.intercept.tolist(),
        }

    def set_state(self, state: dict) -> None:
        self.gamma_ = state["gamma"]
        self.n_features = state["n_features"]
        self.support_vectors = np.array(state["support_vectors"], dtype=np.float64).reshape(-1, self.n_features)
        self.intercept = np.array(state["intercept"], dtype=np.float64)
        self.n_classes = len(self.intercept)
        self.dual_coef = np.array(state["dual_coef"], dtype=np.float64).reshape(self.n_classes, -1)
