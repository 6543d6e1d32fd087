import logging
from typing import Any, Optional

import numpy as np

from .base import FittedModel, check_matrix, check_training_data

logger = logging.getLogger(__name__)

KERNELS = ('rbf', 'linear')

# Smallest alpha change SMO accepts as progress
STEP_EPSILON = 1e-10


def rbf(a, b, gamma: float) -> float:
    """exp(-gamma * ||a - b||^2)."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.exp(-gamma * float(diff @ diff)))


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float) -> np.ndarray:
    if kernel == 'linear':
        return A @ B.T
    sq_a = np.einsum('ij,ij->i', A, A)[:, np.newaxis]
    sq_b = np.einsum('ij,ij->i', B, B)[np.newaxis, :]
    sq_dist = np.maximum(sq_a + sq_b - 2.0 * (A @ B.T), 0.0)
    return np.exp(-gamma * sq_dist)


class SvmModel(FittedModel):
    """
    Kernel SVM decision function ``sum_i dual_coef_i * K(sv_i, x) + bias``.

    ``dual_coef`` holds alpha_i * y_i with y in {-1, +1}; ``support`` holds the
    training-set indices of the support vectors.
    """

    kind = 'svm'

    def __init__(
        self,
        support_vectors,
        dual_coef,
        bias: float,
        gamma: float,
        C: float,
        kernel: str = 'rbf',
        support=(),
        converged: bool = True,
        dual_objective: float = 0.0,
        n_features: Optional[int] = None,
    ):
        self.support_vectors = np.asarray(support_vectors, dtype=np.float64)
        self.dual_coef = np.asarray(dual_coef, dtype=np.float64)
        self.bias = float(bias)
        self.gamma = float(gamma)
        self.C = float(C)
        self.kernel = kernel
        self.support = np.asarray(support, dtype=np.int64)
        self.converged = converged
        self.dual_objective = float(dual_objective)
        if n_features is None:
            n_features = self.support_vectors.shape[1]
        self.n_features = n_features
        if self.support_vectors.size == 0:
            self.support_vectors = self.support_vectors.reshape(0, n_features)

    @property
    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coef)

    def decision_function(self, X) -> np.ndarray:
        X = check_matrix(X, self.n_features)
        if len(self.dual_coef) == 0:
            return np.full(X.shape[0], self.bias)
        K = kernel_matrix(X, self.support_vectors, self.kernel, self.gamma)
        return K @ self.dual_coef + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(np.int64)

    def get_state(self) -> dict[str, Any]:
        return {
            'support_vectors': self.support_vectors.tolist(),
            'dual_coef': self.dual_coef.tolist(),
            'bias': self.bias,
            'gamma': self.gamma,
            'C': self.C,
            'kernel': self.kernel,
            'support': self.support.tolist(),
            'converged': self.converged,
            'dual_objective': self.dual_objective,
            'n_features': self.n_features,
        }

    @classmethod
    def from_state(cls, state):
        return cls(**state)


class _SmoSolver:
    """
    Pairwise coordinate ascent on the SVM dual (Platt's SMO).

    The error cache ``E = f(x) - y`` is kept exact for every point after each
    accepted step, so the second index is chosen by maximal |E1 - E2| over the
    non-bound set before falling back to sweeps.
    """

    def __init__(self, K: np.ndarray, y: np.ndarray, C: float, tol: float, rng):
        self.K = K
        self.y = y
        self.C = C
        self.tol = tol
        self.rng = rng
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        self.errors = -y.astype(np.float64)

    def dual_objective(self) -> float:
        ay = self.alpha * self.y
        return float(self.alpha.sum() - 0.5 * ay @ self.K @ ay)

    def _non_bound(self) -> np.ndarray:
        return np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))

    def violates_kkt(self, i: int) -> bool:
        r = self.errors[i] * self.y[i]
        return bool(
            (r < -self.tol and self.alpha[i] < self.C)
            or (r > self.tol and self.alpha[i] > 0)
        )

    def take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        K, y, C = self.K, self.y, self.C
        alpha1, alpha2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = y[i1], y[i2]
        E1, E2 = self.errors[i1], self.errors[i2]
        s = y1 * y2

        if y1 != y2:
            L, H = max(0.0, alpha2 - alpha1), min(C, C + alpha2 - alpha1)
        else:
            L, H = max(0.0, alpha1 + alpha2 - C), min(C, alpha1 + alpha2)
        if H - L < STEP_EPSILON:
            return False

        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2 = float(np.clip(alpha2 + y2 * (E1 - E2) / eta, L, H))
        else:
            # Degenerate curvature: compare the objective at both ends of the segment
            f1 = y1 * (E1 + self.b) - alpha1 * k11 - s * alpha2 * k12
            f2 = y2 * (E2 + self.b) - s * alpha1 * k12 - alpha2 * k22
            L1 = alpha1 + s * (alpha2 - L)
            H1 = alpha1 + s * (alpha2 - H)
            obj_L = (
                L1 * f1 + L * f2 + 0.5 * L1**2 * k11 + 0.5 * L**2 * k22 + s * L * L1 * k12
            )
            obj_H = (
                H1 * f1 + H * f2 + 0.5 * H1**2 * k11 + 0.5 * H**2 * k22 + s * H * H1 * k12
            )
            if obj_L < obj_H - STEP_EPSILON:
                a2 = L
            elif obj_L > obj_H + STEP_EPSILON:
                a2 = H
            else:
                a2 = alpha2

        if abs(a2 - alpha2) < STEP_EPSILON * (a2 + alpha2 + STEP_EPSILON):
            return False

        a1 = alpha1 + s * (alpha2 - a2)
        a1 = float(np.clip(a1, 0.0, C))
        if a1 < STEP_EPSILON:
            a1 = 0.0
        if a2 < STEP_EPSILON:
            a2 = 0.0

        b1 = self.b - E1 - y1 * (a1 - alpha1) * k11 - y2 * (a2 - alpha2) * k12
        b2 = self.b - E2 - y1 * (a1 - alpha1) * k12 - y2 * (a2 - alpha2) * k22
        if 0 < a1 < C:
            b_new = b1
        elif 0 < a2 < C:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)

        self.errors += (
            y1 * (a1 - alpha1) * K[:, i1]
            + y2 * (a2 - alpha2) * K[:, i2]
            + (b_new - self.b)
        )
        self.alpha[i1], self.alpha[i2] = a1, a2
        self.b = b_new
        return True

    def examine(self, i2: int) -> int:
        if not self.violates_kkt(i2):
            return 0

        non_bound = self._non_bound()
        if len(non_bound) > 1:
            gaps = np.abs(self.errors[non_bound] - self.errors[i2])
            i1 = int(non_bound[np.argmax(gaps)])
            if self.take_step(i1, i2):
                return 1

        for i1 in np.roll(non_bound, -int(self.rng.integers(max(len(non_bound), 1)))):
            if self.take_step(int(i1), i2):
                return 1

        for i1 in np.roll(np.arange(self.n), -int(self.rng.integers(self.n))):
            if self.take_step(int(i1), i2):
                return 1
        return 0

    def solve(self, max_passes: int) -> tuple[bool, int]:
        """Alternate full passes and non-bound passes until nothing changes."""
        examine_all = True
        passes = 0
        while passes < max_passes:
            if examine_all:
                candidates = np.arange(self.n)
            else:
                candidates = self._non_bound()
            num_changed = sum(self.examine(int(i)) for i in candidates)
            passes += 1

            if examine_all:
                if num_changed == 0:
                    return True, passes
                examine_all = False
            elif num_changed == 0:
                examine_all = True
        return False, passes


def fit_svm(
    X,
    y,
    C: float = 1.0,
    gamma: Optional[float] = None,
    tol: float = 1e-3,
    max_passes: int = 100,
    kernel: str = 'rbf',
    seed: int = 0,
) -> SvmModel:
    """
    Fit a binary SVM with SMO. Labels are mapped to -1/+1 internally.

    ``gamma=None`` uses 1 / (n_features * var(X)). If the solver hits
    ``max_passes`` the current iterate is returned with ``converged=False``.
    """
    X, y01 = check_training_data(X, y)
    if C <= 0:
        raise ValueError(f'C must be positive, got {C}')
    if kernel not in KERNELS:
        raise ValueError(f'Unknown kernel "{kernel}"; expected one of {KERNELS}')

    n_samples, n_features = X.shape
    if gamma is None:
        variance = float(X.var())
        gamma = 1.0 / (n_features * variance) if variance > 0 else 1.0
    if gamma < 0:
        raise ValueError(f'gamma must be >= 0, got {gamma}')

    y_signed = np.where(y01 == 1, 1.0, -1.0)
    K = kernel_matrix(X, X, kernel, gamma)
    solver = _SmoSolver(K, y_signed, C, tol, np.random.default_rng(seed))
    converged, passes = solver.solve(max_passes)

    if not converged:
        logger.warning(
            f'SMO did not converge within {max_passes} passes; returning current iterate'
        )
    else:
        logger.debug(f'SMO converged after {passes} passes')

    support = np.flatnonzero(solver.alpha > 0)
    return SvmModel(
        support_vectors=X[support],
        dual_coef=solver.alpha[support] * y_signed[support],
        bias=solver.b,
        gamma=gamma,
        C=C,
        kernel=kernel,
        support=support,
        converged=converged,
        dual_objective=solver.dual_objective(),
        n_features=n_features,
    )
