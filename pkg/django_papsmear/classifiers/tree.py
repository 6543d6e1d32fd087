import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from scipy.special import xlogy

from .base import FittedModel, check_matrix, check_training_data

logger = logging.getLogger(__name__)

# Gains at or below this are float noise, not entropy reduction
MIN_GAIN = 1e-12


def entropy(counts) -> float:
    """Shannon entropy in bits of a count vector; 0 * log 0 is 0."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    return float(-np.sum(xlogy(p, p)) / np.log(2.0))


def _binary_entropy(positives: np.ndarray, totals: np.ndarray) -> np.ndarray:
    p = positives / totals
    return -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)) / np.log(2.0)


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    gain: float


def best_split(
    X, y, feature_subset=None, min_samples_leaf: int = 1
) -> Optional[SplitCandidate]:
    """
    Information-gain split over midpoints of sorted distinct values.

    Ties resolve to the lowest feature index, then the lowest threshold.
    Returns None when no split has positive gain (the node is a leaf).
    """
    X = check_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n < 2:
        return None

    positives = int(y.sum())
    parent = entropy([n - positives, positives])
    if parent == 0.0:
        return None

    features = range(X.shape[1]) if feature_subset is None else sorted(feature_subset)
    best: Optional[SplitCandidate] = None

    for feature in features:
        order = np.argsort(X[:, feature], kind='stable')
        values = X[order, feature]
        left_pos = np.cumsum(y[order])[:-1].astype(np.float64)
        left_n = np.arange(1, n, dtype=np.float64)
        right_pos = positives - left_pos
        right_n = n - left_n

        valid = (values[:-1] < values[1:]) & (left_n >= min_samples_leaf) & (
            right_n >= min_samples_leaf
        )
        if not valid.any():
            continue

        children = (
            left_n * _binary_entropy(left_pos, left_n)
            + right_n * _binary_entropy(right_pos, right_n)
        ) / n
        gains = np.where(valid, parent - children, -np.inf)
        position = int(np.argmax(gains))
        gain = float(gains[position])

        if gain > MIN_GAIN and (best is None or gain > best.gain):
            threshold = 0.5 * (values[position] + values[position + 1])
            best = SplitCandidate(int(feature), float(threshold), gain)

    return best


@dataclass
class TreeNode:
    """
    Internal nodes carry (feature, threshold, left, right); leaves only the class
    counts. Every node keeps ``counts`` = (normal, abnormal) of its training rows.
    """

    counts: tuple[int, int]
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional['TreeNode'] = None
    right: Optional['TreeNode'] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def label(self) -> int:
        # Ties go to abnormal
        return int(self.counts[1] >= self.counts[0])

    @property
    def proba(self) -> float:
        return self.counts[1] / max(sum(self.counts), 1)

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_dict(self) -> dict[str, Any]:
        if self.is_leaf:
            return {'counts': list(self.counts)}
        return {
            'counts': list(self.counts),
            'feature': self.feature,
            'threshold': self.threshold,
            'left': self.left.to_dict(),
            'right': self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'TreeNode':
        if 'feature' not in data:
            return cls(counts=tuple(data['counts']))
        return cls(
            counts=tuple(data['counts']),
            feature=data['feature'],
            threshold=data['threshold'],
            left=cls.from_dict(data['left']),
            right=cls.from_dict(data['right']),
        )


def apply_tree(node: TreeNode, X: np.ndarray) -> list[TreeNode]:
    """Route every row of X to its leaf."""
    leaves: list[Optional[TreeNode]] = [None] * X.shape[0]
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        current, rows = stack.pop()
        if current.is_leaf:
            for row in rows:
                leaves[row] = current
            continue
        goes_left = X[rows, current.feature] <= current.threshold
        stack.append((current.left, rows[goes_left]))
        stack.append((current.right, rows[~goes_left]))
    return leaves  # type: ignore[return-value]


class TreeModel(FittedModel):
    kind = 'dtree'
    probabilistic = True

    def __init__(self, root: TreeNode, n_features: int):
        self.root = root
        self.n_features = n_features

    def predict(self, X) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        return np.array([leaf.label for leaf in apply_tree(self.root, X)], dtype=np.int64)

    def predict_proba(self, X) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        return np.array([leaf.proba for leaf in apply_tree(self.root, X)])

    def get_state(self) -> dict[str, Any]:
        return {'root': self.root.to_dict(), 'n_features': self.n_features}

    @classmethod
    def from_state(cls, state):
        return cls(TreeNode.from_dict(state['root']), state['n_features'])


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    max_features: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> TreeNode:
    """
    Grow a tree by recursive best_split.

    With ``max_features`` below the feature count, each split draws that many
    features from ``rng`` without replacement.
    """
    n_features = X.shape[1]
    subset_size = n_features if max_features is None else min(max_features, n_features)

    def grow(rows: np.ndarray, depth: int) -> TreeNode:
        positives = int(y[rows].sum())
        node = TreeNode(counts=(len(rows) - positives, positives))
        if max_depth is not None and depth >= max_depth:
            return node
        if len(rows) < 2 * min_samples_leaf:
            return node

        if subset_size < n_features:
            subset = rng.choice(n_features, size=subset_size, replace=False)
        else:
            subset = None
        split = best_split(X[rows], y[rows], subset, min_samples_leaf)
        if split is None:
            return node

        goes_left = X[rows, split.feature] <= split.threshold
        node.feature = split.feature
        node.threshold = split.threshold
        node.left = grow(rows[goes_left], depth + 1)
        node.right = grow(rows[~goes_left], depth + 1)
        return node

    if subset_size < n_features and rng is None:
        rng = np.random.default_rng()
    return grow(np.arange(X.shape[0]), 0)


def fit_tree(
    X, y, max_depth: Optional[int] = None, min_samples_leaf: int = 1
) -> TreeModel:
    X, y = check_training_data(X, y)
    if max_depth is not None and max_depth < 0:
        raise ValueError(f'max_depth must be >= 0, got {max_depth}')
    if min_samples_leaf < 1:
        raise ValueError(f'min_samples_leaf must be >= 1, got {min_samples_leaf}')

    root = build_tree(X, y, max_depth, min_samples_leaf)
    logger.debug(f'Decision tree fitted with depth {root.depth()}')
    return TreeModel(root, X.shape[1])
