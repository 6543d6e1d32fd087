import logging
from typing import Any

import numpy as np
from scipy.special import expit

from ..exceptions import TrainingError
from .base import FittedModel, check_matrix, check_training_data

logger = logging.getLogger(__name__)

PROBA_CLIP = 1e-12


def sigmoid(z):
    """Logistic function; stable for large |z| (sigmoid(-1000) == 0.0, no overflow)."""
    result = expit(np.asarray(z, dtype=np.float64))
    return float(result) if np.ndim(result) == 0 else result


def log_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, PROBA_CLIP, 1 - PROBA_CLIP)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


class LogRegModel(FittedModel):
    kind = 'logreg'
    probabilistic = True

    def __init__(self, weights, bias: float, loss_history=()):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = float(bias)
        self.loss_history = tuple(float(v) for v in loss_history)
        self.n_features = self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        return X @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(np.int64)

    def get_state(self) -> dict[str, Any]:
        return {
            'weights': self.weights.tolist(),
            'bias': self.bias,
            'loss_history': list(self.loss_history),
        }

    @classmethod
    def from_state(cls, state):
        return cls(state['weights'], state['bias'], state.get('loss_history', ()))


def fit_logreg(X, y, lr: float = 0.1, epochs: int = 500, l2: float = 1e-4) -> LogRegModel:
    """
    Full-batch gradient descent on mean cross-entropy + (l2 / 2) * ||w||^2.

    Expects scaled features. The bias is not regularized.

    Raises:
        TrainingError: If the loss becomes non-finite
    """
    X, y = check_training_data(X, y)
    if lr <= 0:
        raise ValueError(f'lr must be positive, got {lr}')
    if epochs < 0:
        raise ValueError(f'epochs must be >= 0, got {epochs}')

    n_samples, n_features = X.shape
    weights = np.zeros(n_features)
    bias = 0.0
    history = []

    for epoch in range(epochs):
        p = expit(X @ weights + bias)
        loss = log_loss(y, p) + 0.5 * l2 * float(weights @ weights)
        if not np.isfinite(loss):
            raise TrainingError(f'Logistic regression loss is {loss} at epoch {epoch}')
        history.append(loss)

        residual = p - y
        weights = weights - lr * (X.T @ residual / n_samples + l2 * weights)
        bias -= lr * float(residual.mean())

    logger.debug(
        f'Logistic regression: {epochs} epochs, final loss '
        f'{history[-1] if history else float("nan"):.6f}'
    )
    return LogRegModel(weights, bias, history)
