import logging
from typing import Any

import numpy as np

from ..data import BinaryLabel
from .base import FittedModel, check_matrix, check_training_data

logger = logging.getLogger(__name__)


def minkowski(a, b, p: float = 2.0) -> float:
    """(sum |a_i - b_i|^p)^(1/p); a metric for p >= 1."""
    if p < 1:
        raise ValueError(f'Minkowski power must be >= 1, got {p}')
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f'Dimension mismatch: {a.shape} vs {b.shape}')
    return float(np.sum(np.abs(a - b) ** p) ** (1.0 / p))


def pairwise_minkowski(A: np.ndarray, B: np.ndarray, p: float = 2.0) -> np.ndarray:
    """Distance matrix of shape (len(A), len(B))."""
    if p < 1:
        raise ValueError(f'Minkowski power must be >= 1, got {p}')
    diff = np.abs(A[:, np.newaxis, :] - B[np.newaxis, :, :])
    if p == 2:
        return np.sqrt(np.einsum('ijk,ijk->ij', diff, diff))
    if p == 1:
        return diff.sum(axis=2)
    return np.sum(diff**p, axis=2) ** (1.0 / p)


class KnnModel(FittedModel):
    """
    Exact k-nearest-neighbour vote over the stored training set.

    Neighbours at equal distance are ranked by training order; a tied vote goes to
    abnormal.
    """

    kind = 'knn'

    def __init__(self, X, y, k: int = 9, p: float = 2.0):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.k = int(k)
        self.p = float(p)
        self.n_features = self.X.shape[1]

    def neighbors(self, X) -> np.ndarray:
        """Indices of the k nearest training samples for every row of X."""
        X = check_matrix(X, self.n_features)
        distances = pairwise_minkowski(X, self.X, self.p)
        return np.argsort(distances, axis=1, kind='stable')[:, : self.k]

    def predict(self, X) -> np.ndarray:
        votes = self.y[self.neighbors(X)].sum(axis=1)
        return (2 * votes >= self.k).astype(np.int64)

    def get_state(self) -> dict[str, Any]:
        return {'X': self.X.tolist(), 'y': self.y.tolist(), 'k': self.k, 'p': self.p}

    @classmethod
    def from_state(cls, state):
        return cls(state['X'], state['y'], state['k'], state['p'])


def fit_knn(X, y, k: int = 9, p: float = 2.0) -> KnnModel:
    X, y = check_training_data(X, y)
    if k < 1:
        raise ValueError(f'k must be >= 1, got {k}')
    if k > X.shape[0]:
        raise ValueError(f'k={k} exceeds the training set size {X.shape[0]}')
    if p < 1:
        raise ValueError(f'Minkowski power must be >= 1, got {p}')
    if k % 2 == 0:
        logger.debug(f'k={k} is even; tied votes resolve to abnormal')
    return KnnModel(X, y, k, p)


def predict_knn(model: KnnModel, x) -> BinaryLabel:
    return BinaryLabel(int(model.predict(np.atleast_2d(x))[0]))
