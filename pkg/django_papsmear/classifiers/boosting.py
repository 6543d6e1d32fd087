import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy.special import expit, logit

from ..exceptions import TrainingError
from .base import FittedModel, check_matrix, check_training_data
from .linear import log_loss

logger = logging.getLogger(__name__)

# Keeps the base log-odds finite for single-class training sets
BASE_RATE_CLIP = 1e-6


def gb_leaf_weight(G, H, reg_lambda: float):
    """Optimal leaf weight -G / (H + lambda)."""
    return -G / (H + reg_lambda)


def gb_split_gain(G_L, H_L, G_R, H_R, reg_lambda: float, gamma: float):
    """
    Regularized second-order split gain. Splits with gain <= 0 are pruned.

    Works element-wise on arrays of candidate splits.
    """
    G = G_L + G_R
    H = H_L + H_R
    return (
        0.5
        * (
            G_L**2 / (H_L + reg_lambda)
            + G_R**2 / (H_R + reg_lambda)
            - G**2 / (H + reg_lambda)
        )
        - gamma
    )


@dataclass
class RegressionNode:
    weight: float
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional['RegressionNode'] = None
    right: Optional['RegressionNode'] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        stack = [(self, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if node.is_leaf:
                out[rows] = node.weight
                continue
            goes_left = X[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[goes_left]))
            stack.append((node.right, rows[~goes_left]))
        return out

    def to_dict(self) -> dict[str, Any]:
        if self.is_leaf:
            return {'weight': self.weight}
        return {
            'weight': self.weight,
            'feature': self.feature,
            'threshold': self.threshold,
            'left': self.left.to_dict(),
            'right': self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'RegressionNode':
        if 'feature' not in data:
            return cls(weight=data['weight'])
        return cls(
            weight=data['weight'],
            feature=data['feature'],
            threshold=data['threshold'],
            left=cls.from_dict(data['left']),
            right=cls.from_dict(data['right']),
        )


def _best_feature_split(
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float,
) -> Optional[tuple[float, float]]:
    """Exact greedy scan of one feature; returns (gain, threshold) or None."""
    order = np.argsort(x, kind='stable')
    values = x[order]
    G_L = np.cumsum(g[order])[:-1]
    H_L = np.cumsum(h[order])[:-1]
    G_R = g.sum() - G_L
    H_R = h.sum() - H_L

    valid = (
        (values[:-1] < values[1:])
        & (H_L >= min_child_weight)
        & (H_R >= min_child_weight)
    )
    if not valid.any():
        return None
    gains = np.where(valid, gb_split_gain(G_L, H_L, G_R, H_R, reg_lambda, gamma), -np.inf)
    position = int(np.argmax(gains))
    return float(gains[position]), float(0.5 * (values[position] + values[position + 1]))


class _BoostingTreeBuilder:
    def __init__(
        self,
        X: np.ndarray,
        reg_lambda: float,
        gamma: float,
        max_depth: int,
        min_child_weight: float,
        executor: Optional[ThreadPoolExecutor] = None,
    ):
        self.X = X
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.max_depth = max_depth
        self.min_child_weight = min_child_weight
        self.executor = executor

    def build(self, g: np.ndarray, h: np.ndarray) -> RegressionNode:
        return self._grow(np.arange(self.X.shape[0]), g, h, 0)

    def _grow(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int):
        g_rows, h_rows = g[rows], h[rows]
        node = RegressionNode(
            weight=float(gb_leaf_weight(g_rows.sum(), h_rows.sum(), self.reg_lambda))
        )
        if depth >= self.max_depth or len(rows) < 2:
            return node

        def scan(feature: int):
            return _best_feature_split(
                self.X[rows, feature],
                g_rows,
                h_rows,
                self.reg_lambda,
                self.gamma,
                self.min_child_weight,
            )

        features = range(self.X.shape[1])
        if self.executor is not None:
            results = list(self.executor.map(scan, features))
        else:
            results = [scan(f) for f in features]

        # Reduce in feature order: ties keep the lowest feature index
        best_feature, best_gain, best_threshold = None, 0.0, 0.0
        for feature, result in zip(features, results):
            if result is not None and result[0] > best_gain:
                best_feature, (best_gain, best_threshold) = feature, result
        if best_feature is None:
            return node

        goes_left = self.X[rows, best_feature] <= best_threshold
        node.feature = best_feature
        node.threshold = best_threshold
        node.left = self._grow(rows[goes_left], g, h, depth + 1)
        node.right = self._grow(rows[~goes_left], g, h, depth + 1)
        return node


class GbModel(FittedModel):
    """Margin = base_score + eta * sum of tree outputs; P(abnormal) = sigmoid(margin)."""

    kind = 'gboost'
    probabilistic = True

    def __init__(
        self,
        base_score: float,
        trees: list[RegressionNode],
        eta: float,
        n_features: int,
        reg_lambda: float = 1.0,
        gamma: float = 0.0,
        max_depth: int = 4,
        loss_history=(),
    ):
        self.base_score = float(base_score)
        self.trees = list(trees)
        self.eta = float(eta)
        self.n_features = n_features
        self.reg_lambda = float(reg_lambda)
        self.gamma = float(gamma)
        self.max_depth = max_depth
        self.loss_history = tuple(float(v) for v in loss_history)

    def margin(self, X) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return self.base_score + self.eta * total

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.margin(X))

    def predict(self, X) -> np.ndarray:
        return (self.margin(X) >= 0).astype(np.int64)

    def get_state(self) -> dict[str, Any]:
        return {
            'base_score': self.base_score,
            'trees': [tree.to_dict() for tree in self.trees],
            'eta': self.eta,
            'n_features': self.n_features,
            'reg_lambda': self.reg_lambda,
            'gamma': self.gamma,
            'max_depth': self.max_depth,
            'loss_history': list(self.loss_history),
        }

    @classmethod
    def from_state(cls, state):
        state = dict(state)
        state['trees'] = [RegressionNode.from_dict(t) for t in state['trees']]
        return cls(**state)


def fit_gboost(
    X,
    y,
    n_rounds: int = 100,
    eta: float = 0.1,
    reg_lambda: float = 1.0,
    gamma: float = 0.0,
    max_depth: int = 4,
    min_child_weight: float = 1.0,
    n_jobs: int = 1,
) -> GbModel:
    """
    Gradient boosting on the logistic loss with second-order regression trees.

    Each round uses g = p - y and h = p(1 - p) at the current margin. A
    single-class training set (or eta = 0) yields the base score only.
    Split search runs over features on ``n_jobs`` threads; the result does not
    depend on ``n_jobs``.
    """
    X, y = check_training_data(X, y)
    if n_rounds < 0:
        raise ValueError(f'n_rounds must be >= 0, got {n_rounds}')
    if eta < 0:
        raise ValueError(f'eta must be >= 0, got {eta}')
    if max_depth < 0:
        raise ValueError(f'max_depth must be >= 0, got {max_depth}')

    rate = float(np.clip(y.mean(), BASE_RATE_CLIP, 1 - BASE_RATE_CLIP))
    base_score = float(logit(rate))
    margin = np.full(len(y), base_score)
    history = [log_loss(y, expit(margin))]

    if y.min() == y.max() or eta == 0:
        logger.debug('Boosting: nothing to fit beyond the base score')
        return GbModel(
            base_score, [], eta, X.shape[1], reg_lambda, gamma, max_depth, history
        )

    trees = []
    executor = ThreadPoolExecutor(max_workers=n_jobs) if n_jobs > 1 else None
    try:
        builder = _BoostingTreeBuilder(
            X, reg_lambda, gamma, max_depth, min_child_weight, executor
        )
        for round_index in range(n_rounds):
            p = expit(margin)
            tree = builder.build(p - y, p * (1.0 - p))
            margin = margin + eta * tree.predict(X)
            loss = log_loss(y, expit(margin))
            if not np.isfinite(loss):
                raise TrainingError(f'Boosting loss is {loss} at round {round_index}')
            trees.append(tree)
            history.append(loss)
            logger.debug(f'Boosting round {round_index}: train logloss {loss:.6f}')
    finally:
        if executor is not None:
            executor.shutdown()

    return GbModel(
        base_score, trees, eta, X.shape[1], reg_lambda, gamma, max_depth, history
    )
