"""
Hyperparameter search: grid expansion, stratified k-fold cross-validation and a
parallel trial runner that ranks specs by mean fold accuracy.
"""

import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np
import pandas as pd

from .classifiers import PARAM_SCHEMA, SCALED_KINDS, ClassifierSpec, fit, predict
from .conf import get_setting
from .data import FeatureTable, fit_scaler
from .exceptions import ConfigError
from .metrics import METRIC_NAMES, MetricsReport, evaluate

logger = logging.getLogger(__name__)


class TrialTimeout(Exception):
    pass


@dataclass(frozen=True)
class ParamGrid:
    """
    Candidate values per parameter of one classifier kind.

    Axes are expanded in sorted name order, so the grid order does not depend on how
    the mapping was written.
    """

    kind: str
    axes: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PARAM_SCHEMA:
            raise ConfigError(f'Unknown classifier kind "{self.kind}"')
        unknown = sorted(set(self.axes) - set(PARAM_SCHEMA[self.kind]))
        if unknown:
            raise ConfigError(
                f'Unknown parameter(s) for {self.kind}: {", ".join(unknown)}'
            )
        axes = {}
        for name in sorted(self.axes):
            values = tuple(self.axes[name])
            if not values:
                raise ConfigError(f'Grid axis {self.kind}.{name} has no values')
            axes[name] = values
        object.__setattr__(self, 'axes', axes)

    def __len__(self):
        return int(np.prod([len(v) for v in self.axes.values()], dtype=np.int64))

    def points(self) -> list[dict[str, Any]]:
        names = list(self.axes)
        combos = itertools.product(*self.axes.values())
        return [dict(zip(names, combo)) for combo in combos]


def expand(grid: ParamGrid) -> list[ClassifierSpec]:
    """Cartesian product of the axes; an empty grid yields the all-defaults spec."""
    return [ClassifierSpec(grid.kind, point) for point in grid.points()]


def kfold(table, k: int = 5, seed: int = 0, stratified: bool = True) -> list[np.ndarray]:
    """
    Partition the rows of ``table`` (anything with ``labels``) into ``k`` folds.

    Rows are shuffled per label and dealt round-robin, continuing across labels, so
    fold sizes differ by at most one and every label's per-fold count by at most one.
    Each fold is returned as sorted indices.
    """
    labels = np.asarray(table.labels if hasattr(table, 'labels') else table)
    if k < 2:
        raise ValueError(f'k must be >= 2, got {k}')
    if k > len(labels):
        raise ValueError(f'k={k} exceeds the {len(labels)} samples')

    rng = np.random.default_rng(seed)
    if stratified:
        groups = []
        for label in np.unique(labels):
            members = np.flatnonzero(labels == label)
            if k > len(members):
                raise ValueError(
                    f'k={k} exceeds the {len(members)} samples labelled {label}'
                )
            groups.append(rng.permutation(members))
    else:
        groups = [rng.permutation(len(labels))]

    folds: list[list[int]] = [[] for _ in range(k)]
    position = 0
    for members in groups:
        for row in members:
            folds[position % k].append(int(row))
            position += 1
    return [np.sort(np.asarray(fold, dtype=np.int64)) for fold in folds]


@dataclass(frozen=True, eq=False)
class TrialResult:
    index: int
    spec: ClassifierSpec
    fold_metrics: tuple[MetricsReport, ...] = ()
    wall_seconds: float = 0.0
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    @property
    def mean_accuracy(self) -> Optional[float]:
        if self.failed or not self.fold_metrics:
            return None
        return float(np.mean([m.accuracy for m in self.fold_metrics]))

    def mean_metric(self, name: str) -> Optional[float]:
        values = [getattr(m, name) for m in self.fold_metrics]
        if self.failed or not values or any(v is None for v in values):
            return None
        return float(np.mean(values))

    def as_dict(self, include_timing: bool = True) -> dict[str, Any]:
        data: dict[str, Any] = {
            'index': self.index,
            'spec': self.spec.as_dict(),
            'mean_accuracy': self.mean_accuracy,
            'fold_metrics': [m.as_dict() for m in self.fold_metrics],
            'error': self.error,
        }
        if include_timing:
            data['wall_seconds'] = round(self.wall_seconds, 6)
        return data


def _ranking_key(trial: TrialResult):
    # Best accuracy first, failures last, grid order breaks ties
    accuracy = trial.mean_accuracy
    return (accuracy is None, -(accuracy or 0.0), trial.index)


@dataclass(frozen=True, eq=False)
class SearchReport:
    kind: str
    leaderboard: tuple[TrialResult, ...]
    k: int
    seed: int
    total_seconds: float = 0.0

    @property
    def best(self) -> Optional[ClassifierSpec]:
        for trial in self.leaderboard:
            if not trial.failed:
                return trial.spec
        return None

    @property
    def failures(self) -> list[TrialResult]:
        return [t for t in self.leaderboard if t.failed]

    def to_frame(self, include_timing: bool = True) -> pd.DataFrame:
        rows = []
        for rank, trial in enumerate(self.leaderboard, start=1):
            row: dict[str, Any] = {
                'rank': rank,
                'index': trial.index,
                'kind': trial.spec.kind,
                'params': json.dumps(trial.spec.params, sort_keys=True),
                'mean_accuracy': trial.mean_accuracy,
            }
            for name in METRIC_NAMES[1:]:
                row[f'mean_{name}'] = trial.mean_metric(name)
            if include_timing:
                row['wall_seconds'] = round(trial.wall_seconds, 6)
            row['error'] = trial.error or ''
            rows.append(row)
        return pd.DataFrame(rows)

    def to_csv(self, path: Union[str, Path], include_timing: bool = True) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame(include_timing).to_csv(path, index=False)
        return path

    def to_json(
        self, path: Union[str, Path, None] = None, include_timing: bool = True
    ) -> str:
        data: dict[str, Any] = {
            'kind': self.kind,
            'k': self.k,
            'seed': self.seed,
            'best': self.best.as_dict() if self.best else None,
            'trials': [t.as_dict(include_timing) for t in self.leaderboard],
        }
        if include_timing:
            data['total_seconds'] = round(self.total_seconds, 6)
        text = json.dumps(data, indent=2, sort_keys=True)
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text + '\n')
        return text


def evaluate_fold(
    spec: ClassifierSpec, X: np.ndarray, y: np.ndarray, train_rows, test_rows
) -> MetricsReport:
    """Fit on ``train_rows`` only (scaler included) and score on ``test_rows``."""
    X_train, X_test = X[train_rows], X[test_rows]
    if spec.kind in SCALED_KINDS:
        scaler = fit_scaler(X_train)
        X_train, X_test = scaler.apply(X_train), scaler.apply(X_test)
    model = fit(spec, X_train, y[train_rows])
    return evaluate(predict(model, X_test), y[test_rows])


def _run_trial_safe(
    index: int,
    spec: ClassifierSpec,
    X: np.ndarray,
    y: np.ndarray,
    folds: list[np.ndarray],
    trial_timeout: Optional[float],
) -> TrialResult:
    """Cross-validate one spec; any error is recorded on the result instead of raised."""
    started = time.perf_counter()
    reports = []
    try:
        for fold_index, test_rows in enumerate(folds):
            train_rows = np.concatenate(
                [f for i, f in enumerate(folds) if i != fold_index]
            )
            reports.append(evaluate_fold(spec, X, y, train_rows, test_rows))
            elapsed = time.perf_counter() - started
            if trial_timeout is not None and elapsed > trial_timeout:
                raise TrialTimeout(
                    f'timed out after {elapsed:.2f}s (limit {trial_timeout}s)'
                )
    except Exception as e:
        logger.error(f'Trial {index} {spec} failed: {e}')
        return TrialResult(
            index, spec, tuple(reports), time.perf_counter() - started, str(e) or repr(e)
        )

    result = TrialResult(index, spec, tuple(reports), time.perf_counter() - started)
    logger.debug(f'Trial {index} {spec}: mean accuracy {result.mean_accuracy:.4f}')
    return result


def search(
    grid: ParamGrid,
    table: FeatureTable,
    kind: Optional[str] = None,
    k: int = 5,
    seed: int = 0,
    n_jobs: Optional[int] = None,
    max_trials: Optional[int] = None,
    trial_timeout: Optional[float] = None,
    stratified: bool = True,
) -> SearchReport:
    """
    Cross-validate every spec of ``grid`` on the same ``k`` folds of ``table``.

    Trials run on ``n_jobs`` threads (default: the ``N_JOBS`` setting) and are
    collected in grid order, so the leaderboard does not depend on the worker count.
    ``max_trials`` keeps the first trials in grid order; a trial running past
    ``trial_timeout`` seconds is stopped after its current fold and recorded as failed.
    """
    if kind is not None and kind != grid.kind:
        raise ConfigError(f'Grid is for {grid.kind}, not {kind}')
    if max_trials is not None and max_trials < 1:
        raise ValueError(f'max_trials must be >= 1, got {max_trials}')
    n_jobs = n_jobs or get_setting('N_JOBS')

    specs = expand(grid)
    if max_trials is not None and len(specs) > max_trials:
        logger.warning(f'Grid has {len(specs)} trials; running the first {max_trials}')
        specs = specs[:max_trials]

    X, y = table.features, table.labels
    folds = kfold(table, k, seed, stratified)
    logger.info(
        f'Searching {len(specs)} {grid.kind} trials with {k}-fold CV '
        f'on {n_jobs} worker(s)'
    )

    started = time.perf_counter()
    if n_jobs > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            futures = [
                executor.submit(_run_trial_safe, i, spec, X, y, folds, trial_timeout)
                for i, spec in enumerate(specs)
            ]
            trials = [future.result() for future in futures]
    else:
        trials = [
            _run_trial_safe(i, spec, X, y, folds, trial_timeout)
            for i, spec in enumerate(specs)
        ]
    total = time.perf_counter() - started

    leaderboard = tuple(sorted(trials, key=_ranking_key))
    report = SearchReport(grid.kind, leaderboard, k, seed, total)
    failed = len(report.failures)
    if failed:
        logger.warning(f'{failed} of {len(trials)} trials failed')
    logger.info(f'Search finished in {total:.2f}s; best {report.best}')
    return report
