from abc import ABC, abstractmethod
from typing import Any, ClassVar, Optional

import numpy as np


def check_matrix(X, n_features: Optional[int] = None) -> np.ndarray:
    """Coerce to a 2-D float64 matrix, checking the feature count if given."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f'Expected a 2-D feature matrix, got shape {X.shape}')
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(
            f'Model was fitted on {n_features} features, got {X.shape[1]}'
        )
    return X


def check_training_data(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = check_matrix(X)
    y = np.asarray(y, dtype=np.int64).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f'{X.shape[0]} samples but {y.shape[0]} labels')
    if X.shape[0] == 0:
        raise ValueError('Cannot fit on an empty training set')
    if not np.isin(y, (0, 1)).all():
        raise ValueError('Labels must be 0 (normal) or 1 (abnormal)')
    return X, y


class FittedModel(ABC):
    """
    Base class for fitted, immutable classifiers.

    Subclasses set ``kind`` and implement ``predict`` plus the state round trip used
    by JSON persistence. Probabilistic models also override ``predict_proba``.

    Class Attributes:
        kind (str): Registry key, one of the ClassifierSpec kinds
        probabilistic (bool): Whether ``predict_proba`` is supported
    """

    kind: ClassVar[str] = ''
    probabilistic: ClassVar[bool] = False

    n_features: int

    @abstractmethod
    def predict(self, X) -> np.ndarray:
        """Return 0/1 labels (1 = abnormal), one per row of X."""

    def predict_proba(self, X) -> np.ndarray:
        """Return P(abnormal) per row of X."""
        raise NotImplementedError(f'{self.kind} does not provide probabilities')

    @abstractmethod
    def get_state(self) -> dict[str, Any]:
        """JSON-serializable fitted state."""

    @classmethod
    @abstractmethod
    def from_state(cls, state: dict[str, Any]) -> 'FittedModel':
        """Rebuild a model from ``get_state`` output."""

    def __str__(self):
        return f'{self.__class__.__name__}({self.n_features} features)'
