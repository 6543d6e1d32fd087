import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Optional

import numpy as np

from .base import FittedModel, check_matrix, check_training_data
from .tree import TreeModel, TreeNode, build_tree

logger = logging.getLogger(__name__)


class ForestModel(FittedModel):
    """Majority vote over trees; a tied vote goes to abnormal."""

    kind = 'rforest'
    probabilistic = True

    def __init__(
        self,
        trees: list[TreeModel],
        tree_seeds=(),
        max_features: Optional[int] = None,
        bootstrap: bool = True,
    ):
        if not trees:
            raise ValueError('A forest needs at least one tree')
        self.trees = list(trees)
        self.tree_seeds = tuple(int(s) for s in tree_seeds)
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.n_features = trees[0].n_features

    def votes(self, X) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        return np.vstack([tree.predict(X) for tree in self.trees])

    def predict_proba(self, X) -> np.ndarray:
        """Fraction of trees voting abnormal."""
        return self.votes(X).mean(axis=0)

    def predict(self, X) -> np.ndarray:
        votes = self.votes(X).sum(axis=0)
        return (2 * votes >= len(self.trees)).astype(np.int64)

    def get_state(self) -> dict[str, Any]:
        return {
            'trees': [tree.root.to_dict() for tree in self.trees],
            'tree_seeds': list(self.tree_seeds),
            'max_features': self.max_features,
            'bootstrap': self.bootstrap,
            'n_features': self.n_features,
        }

    @classmethod
    def from_state(cls, state):
        n_features = state['n_features']
        trees = [TreeModel(TreeNode.from_dict(t), n_features) for t in state['trees']]
        return cls(trees, state['tree_seeds'], state['max_features'], state['bootstrap'])


def fit_forest(
    X,
    y,
    n_trees: int = 100,
    max_features: Optional[int] = None,
    seed: int = 0,
    bootstrap: bool = True,
    max_depth: Optional[int] = None,
    min_samples_leaf: int = 1,
    n_jobs: int = 1,
) -> ForestModel:
    """
    Random forest of entropy trees.

    Each tree gets its own seed derived from ``seed``, so the fitted forest does not
    depend on ``n_jobs``. ``max_features=None`` means ceil(sqrt(n_features)).
    """
    X, y = check_training_data(X, y)
    if n_trees < 1:
        raise ValueError(f'n_trees must be >= 1, got {n_trees}')

    n_samples, n_features = X.shape
    if max_features is None:
        max_features = math.ceil(math.sqrt(n_features))
    if max_features < 1:
        raise ValueError(f'max_features must be >= 1, got {max_features}')

    tree_seeds = np.random.SeedSequence(seed).generate_state(n_trees, dtype=np.uint32)

    def grow(tree_seed: int) -> TreeModel:
        rng = np.random.default_rng(int(tree_seed))
        if bootstrap:
            rows = rng.integers(0, n_samples, size=n_samples)
        else:
            rows = np.arange(n_samples)
        root = build_tree(
            X[rows], y[rows], max_depth, min_samples_leaf, max_features, rng
        )
        return TreeModel(root, n_features)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            trees = list(executor.map(grow, tree_seeds))
    else:
        trees = [grow(s) for s in tree_seeds]

    logger.debug(f'Random forest fitted: {n_trees} trees, max_features={max_features}')
    return ForestModel(trees, tree_seeds.tolist(), max_features, bootstrap)
