import logging
from typing import Any

import numpy as np
from scipy.special import logsumexp

from ..data import BinaryLabel
from .base import FittedModel, check_matrix, check_training_data

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-9


class GnbModel(FittedModel):
    """
    Gaussian naive Bayes over the two labels.

    ``priors`` has shape (2,), ``means`` and ``variances`` shape (2, n_features);
    row 0 is normal, row 1 abnormal.
    """

    kind = 'gnb'
    probabilistic = True

    def __init__(self, priors, means, variances):
        self.priors = np.asarray(priors, dtype=np.float64)
        self.means = np.asarray(means, dtype=np.float64)
        self.variances = np.asarray(variances, dtype=np.float64)
        self.n_features = self.means.shape[1]

    def joint_log_likelihood(self, X) -> np.ndarray:
        """log P(c) + sum_j log N(x_j | mu_cj, var_cj), shape (n_samples, 2)."""
        X = check_matrix(X, self.n_features)
        log_norm = -0.5 * np.sum(np.log(2.0 * np.pi * self.variances), axis=1)
        sq = (X[:, np.newaxis, :] - self.means[np.newaxis, :, :]) ** 2
        log_density = log_norm - 0.5 * np.sum(sq / self.variances, axis=2)
        return np.log(self.priors) + log_density

    def predict_log_posterior(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return jll - logsumexp(jll, axis=1, keepdims=True)

    def predict_posterior(self, X) -> np.ndarray:
        return np.exp(self.predict_log_posterior(X))

    def predict_proba(self, X) -> np.ndarray:
        return self.predict_posterior(X)[:, 1]

    def predict(self, X) -> np.ndarray:
        jll = self.joint_log_likelihood(X)
        return (jll[:, 1] >= jll[:, 0]).astype(np.int64)

    def get_state(self) -> dict[str, Any]:
        return {
            'priors': self.priors.tolist(),
            'means': self.means.tolist(),
            'variances': self.variances.tolist(),
        }

    @classmethod
    def from_state(cls, state):
        return cls(state['priors'], state['means'], state['variances'])


def fit_gnb(X, y, var_floor: float = VARIANCE_FLOOR) -> GnbModel:
    """Per-class priors, means and population variances floored at ``var_floor``."""
    X, y = check_training_data(X, y)

    priors = []
    means = []
    variances = []
    for label in BinaryLabel:
        rows = X[y == label]
        if len(rows) == 0:
            raise ValueError(f'Gaussian naive Bayes needs samples labelled {label}')
        if len(rows) < 2:
            logger.warning(
                f'Only {len(rows)} sample labelled {label}; variance floor applied'
            )
        priors.append(len(rows) / len(X))
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), var_floor))

    return GnbModel(priors, np.vstack(means), np.vstack(variances))


def predict_gnb(model: GnbModel, x) -> BinaryLabel:
    return BinaryLabel(int(model.predict(np.atleast_2d(x))[0]))
