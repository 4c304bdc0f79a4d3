import numpy as np

from mqtt_ids.estimator import BaseEstimator


class GaussianNaiveBayes(BaseEstimator):
    def __init__(self, var_smoothing: float = 1e-9) -> None:
        super().__init__(var_smoothing=var_smoothing)
        self.priors = np.zeros(0)
        self.means = np.zeros((0, 0))
        self.variances = np.zeros((0, 0))

    def fit(self, X: np.ndarray, y: np.ndarray, n_classes: int, seed: int) -> None:
        self._set_shape(X, n_classes)
        largest_variance = float(X.var(axis=0).max()) if X.shape[1] else 0.0
        self.variance_floor = self.hyperparameters["var_smoothing"] * (largest_variance or 1.0)
        self.priors = np.array([np.mean(y == k) for k in range(n_classes)])
        self.means = np.array([X[y == k].mean(axis=0) for k in range(n_classes)])
        self.variances = np.array([np.maximum(X[y == k].var(axis=0), self.variance_floor)
                                   for k in range(n_classes)])

    def joint_log_likelihood(self, X: np.ndarray) -> np.ndarray:
        log_normalizer = -0.5 * np.sum(np.log(2.0 * np.pi * self.variances), axis=1)
        squared = (X[:, None, :] - self.means[None, :, :]) ** 2 / self.variances[None, :, :]
        return np.log(self.priors) + log_normalizer - 0.5 * squared.sum(axis=2)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        """Posterior class probabilities."""
        joint = self.joint_log_likelihood(X)
        joint -= joint.max(axis=1, keepdims=True)
        posterior = np.exp(joint)
        return posterior / posterior.sum(axis=1, keepdims=True)

    def get_state(self) -> dict:
        return {"priors": self.priors.tolist(), "means": self.means.tolist(), "variances": self.variances.tolist()}

    def set_state(self, state: dict) -> None:
        self.priors = np.array(state["priors"], dtype=np.float64)
        self.means = np.array(state["means"], dtype=np.float64)
        self.variances = np.array(state["variances"], dtype=np.float64)
        self.n_classes, self.n_features = self.means.shape
