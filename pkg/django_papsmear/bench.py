"""
End-to-end benchmark: one shared split, every enabled classifier plus the CNN,
and the comparison table rendered as markdown, CSV or JSON.

Experiment configs are INI files::

    [experiment]
    seed = 7

    [data]
    feature_csv = herlev.csv
    image_root = herlev/

    [classifiers]
    enabled = knn, gboost
    cnn = false

    [classifier.knn]
    k = 9

Unknown sections and keys are errors.
"""

import configparser
import dataclasses
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

import pandas as pd

from .classifiers import (
    DISPLAY_NAMES,
    KINDS,
    PARAM_SCHEMA,
    SCALED_KINDS,
    ClassifierSpec,
    fit,
    predict,
    validate_params,
)
from .conf import get_setting
from .data import (
    FeatureTable,
    Scaler,
    ScalerKind,
    SplitSpec,
    fit_scaler,
    load_feature_table,
    load_image_set,
    stratified_split,
)
from .exceptions import ConfigError, DatasetError
from .metrics import METRIC_LABELS, METRIC_NAMES, MetricsReport, evaluate
from .nn.training import CnnConfig, TrainHistory, evaluate_network, train
from .tuning import ParamGrid, SearchReport, search

logger = logging.getLogger(__name__)

FORMATS = ('markdown', 'csv', 'json')
FORMAT_FILES = {'markdown': 'report.md', 'csv': 'report.csv', 'json': 'report.json'}

CNN_TRAIN = 'CNN-train'
CNN_TEST = 'CNN-test'
COLUMN_ORDER = tuple(DISPLAY_NAMES[kind] for kind in KINDS) + (CNN_TRAIN, CNN_TEST)

# CnnConfig fields owned by [experiment] / [data] rather than [cnn]
_CNN_DERIVED = ('seed', 'test_fraction', 'validation_fraction')


def _default_classifiers() -> tuple[ClassifierSpec, ...]:
    return tuple(ClassifierSpec(kind) for kind in KINDS)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one benchmark run needs. The CNN inherits the experiment seed and the
    split fractions, so all models see the same split policy.
    """

    name: str = 'herlev'
    seed: int = 0
    feature_csv: Optional[str] = None
    image_root: Optional[str] = None
    feature_columns: Optional[tuple[str, ...]] = None
    class_column: Optional[str] = None
    test_fraction: float = 0.15
    validation_fraction: float = 0.15
    scaler: str = 'zscore'
    classifiers: tuple[ClassifierSpec, ...] = field(default_factory=_default_classifiers)
    cnn_enabled: bool = True
    cnn: CnnConfig = field(default_factory=CnnConfig)
    grids: tuple[ParamGrid, ...] = ()
    folds: int = 5
    max_trials: Optional[int] = None
    trial_timeout: Optional[float] = None
    output_dir: Optional[str] = None
    formats: tuple[str, ...] = FORMATS
    reproducible: Optional[bool] = None
    n_jobs: Optional[int] = None

    def __post_init__(self):
        try:
            ScalerKind(self.scaler)
        except ValueError:
            raise ConfigError(
                f'Unknown scaler "{self.scaler}"; expected one of '
                f'{", ".join(k.value for k in ScalerKind)}'
            ) from None
        unknown = sorted(set(self.formats) - set(FORMATS))
        if unknown:
            raise ConfigError(f'Unknown report format(s): {", ".join(unknown)}')
        kinds = [spec.kind for spec in self.classifiers]
        if len(set(kinds)) != len(kinds):
            raise ConfigError('Each classifier kind may be enabled only once')
        if self.folds < 2:
            raise ConfigError(f'tuning.k must be >= 2, got {self.folds}')
        try:
            self.split_spec
        except DatasetError as e:
            raise ConfigError(str(e)) from e

        ordered = sorted(self.classifiers, key=lambda s: KINDS.index(s.kind))
        object.__setattr__(self, 'classifiers', tuple(ordered))
        object.__setattr__(self, 'formats', tuple(self.formats))
        if self.feature_columns is not None:
            object.__setattr__(self, 'feature_columns', tuple(self.feature_columns))
        try:
            cnn = self.cnn.replace(
                seed=self.seed,
                test_fraction=self.test_fraction,
                validation_fraction=self.validation_fraction,
            )
        except ValueError as e:
            raise ConfigError(f'[cnn]: {e}') from e
        object.__setattr__(self, 'cnn', cnn)

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.validation_fraction, self.seed)

    def replace(self, **changes) -> 'ExperimentConfig':
        return dataclasses.replace(self, **changes)


# --- Config file -------------------------------------------------------------------


def _optional(cast: Callable) -> Callable:
    def parse(value: str):
        if value.strip() == '' or value.strip().lower() == 'none':
            return None
        return cast(value)

    return parse


def _boolean(value: str) -> bool:
    states = configparser.ConfigParser.BOOLEAN_STATES
    if value.strip().lower() not in states:
        raise ValueError(f'not a boolean: {value!r}')
    return states[value.strip().lower()]


def _words(value: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in value.split(',') if part.strip())


def _integers(value: str) -> tuple[int, ...]:
    return tuple(int(part) for part in _words(value))


EXPERIMENT_KEYS: dict[str, Callable] = {
    'name': str,
    'seed': int,
    'output_dir': str,
    'formats': _words,
    'reproducible': _boolean,
    'n_jobs': int,
}

DATA_KEYS: dict[str, Callable] = {
    'feature_csv': str,
    'image_root': str,
    'feature_columns': _words,
    'class_column': str,
    'test_fraction': float,
    'validation_fraction': float,
    'scaler': str,
}

CLASSIFIERS_KEYS: dict[str, Callable] = {'enabled': _words, 'cnn': _boolean}

TUNING_KEYS: dict[str, Callable] = {
    'k': int,
    'max_trials': _optional(int),
    'trial_timeout': _optional(float),
}

CNN_KEYS: dict[str, Callable] = {
    f.name: _integers if f.name == 'filters' else type(f.default)
    for f in dataclasses.fields(CnnConfig)
    if f.name not in _CNN_DERIVED
}


def cast_values(
    section: str, items: dict[str, str], keys: dict[str, Callable]
) -> dict[str, Any]:
    """Cast raw strings with the casts in ``keys``; unknown keys are ConfigErrors."""
    values = {}
    for key, raw in items.items():
        if key not in keys:
            raise ConfigError(
                f'[{section}]: unknown key "{key}" (valid: {", ".join(keys)})'
            )
        try:
            values[key] = keys[key](raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f'[{section}] {key}: invalid value {raw!r} ({e})') from e
    return values


def grid_axes(section: str, kind: str, items: dict[str, str]) -> dict[str, tuple]:
    """Cast comma-separated candidate lists with the parameter schema of ``kind``."""
    schema = PARAM_SCHEMA[kind]
    axes = {}
    for key, raw in items.items():
        if key not in schema:
            raise ConfigError(f'[{section}]: unknown parameter "{key}" for {kind}')
        try:
            axes[key] = tuple(schema[key].cast(value) for value in _words(raw))
        except (TypeError, ValueError) as e:
            raise ConfigError(f'[{section}] {key}: invalid value {raw!r} ({e})') from e
    return axes


def parse_config(text: str, source: str = '<string>') -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    # Parameter names are case-sensitive (svm C)
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        parser.read_string(text, source)
    except configparser.Error as e:
        raise ConfigError(f'{source}: {e}') from e

    fixed = {'experiment', 'data', 'classifiers', 'cnn', 'tuning'}
    for name in parser.sections():
        prefix, _, kind = name.partition('.')
        if name in fixed or (prefix in ('classifier', 'grid') and kind in KINDS):
            continue
        raise ConfigError(f'{source}: unknown section [{name}]')

    def section(name: str, keys: dict[str, Callable]) -> dict[str, Any]:
        if not parser.has_section(name):
            return {}
        return cast_values(name, dict(parser.items(name)), keys)

    options: dict[str, Any] = {}
    options.update(section('experiment', EXPERIMENT_KEYS))
    options.update(section('data', DATA_KEYS))

    selection = section('classifiers', CLASSIFIERS_KEYS)
    enabled = selection.get('enabled', KINDS)
    for kind in enabled:
        if kind not in KINDS:
            raise ConfigError(f'[classifiers] enabled: unknown classifier "{kind}"')
    if 'cnn' in selection:
        options['cnn_enabled'] = selection['cnn']

    specs = []
    for kind in enabled:
        name = f'classifier.{kind}'
        raw = dict(parser.items(name)) if parser.has_section(name) else {}
        resolved = validate_params(kind, raw)
        specs.append(ClassifierSpec(kind, {key: resolved[key] for key in raw}))
    for section_name in parser.sections():
        if section_name.startswith('classifier.') and section_name[11:] not in enabled:
            raise ConfigError(
                f'[{section_name}] configures a classifier that is not enabled'
            )
    options['classifiers'] = tuple(specs)

    cnn_values = section('cnn', CNN_KEYS)
    try:
        options['cnn'] = CnnConfig(**cnn_values)
    except ValueError as e:
        raise ConfigError(f'[cnn]: {e}') from e

    tuning = section('tuning', TUNING_KEYS)
    if 'k' in tuning:
        options['folds'] = tuning.pop('k')
    options.update(tuning)

    options['grids'] = tuple(
        ParamGrid(name[5:], grid_axes(name, name[5:], dict(parser.items(name))))
        for name in parser.sections()
        if name.startswith('grid.')
    )
    return ExperimentConfig(**options)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f'Cannot read config {path}: {e}') from e
    config = parse_config(text, str(path))
    logger.info(f'Loaded experiment config "{config.name}" from {path}')
    return config


def _format_value(value: Any) -> str:
    if value is None:
        return 'none'
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (tuple, list)):
        return ', '.join(_format_value(v) for v in value)
    return str(value)


def dump_config(config: ExperimentConfig) -> str:
    """Canonical INI form; ``parse_config(dump_config(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment,method-assign]

    def put(section: str, values: dict[str, Any]):
        parser[section] = {
            k: _format_value(v) for k, v in values.items() if v is not None
        }

    put(
        'experiment',
        {
            'name': config.name,
            'seed': config.seed,
            'output_dir': config.output_dir,
            'formats': config.formats,
            'reproducible': config.reproducible,
            'n_jobs': config.n_jobs,
        },
    )
    put(
        'data',
        {
            'feature_csv': config.feature_csv,
            'image_root': config.image_root,
            'feature_columns': config.feature_columns,
            'class_column': config.class_column,
            'test_fraction': config.test_fraction,
            'validation_fraction': config.validation_fraction,
            'scaler': config.scaler,
        },
    )
    put(
        'classifiers',
        {
            'enabled': tuple(spec.kind for spec in config.classifiers),
            'cnn': config.cnn_enabled,
        },
    )
    for spec in config.classifiers:
        if spec.params:
            parser[f'classifier.{spec.kind}'] = {
                k: _format_value(v) for k, v in spec.params.items()
            }
    put('cnn', {name: getattr(config.cnn, name) for name in CNN_KEYS})
    put(
        'tuning',
        {
            'k': config.folds,
            'max_trials': config.max_trials,
            'trial_timeout': config.trial_timeout,
        },
    )
    for grid in config.grids:
        parser[f'grid.{grid.kind}'] = {k: _format_value(v) for k, v in grid.axes.items()}

    buffer = io.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(config), encoding='utf-8')
    return path


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(config).encode('utf-8')).hexdigest()


# --- Comparison table --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ColumnResult:
    name: str
    report: Optional[MetricsReport] = None
    error: Optional[str] = None
    seconds: Optional[float] = None

    @property
    def failed(self) -> bool:
        return self.report is None

    def cell(self, metric: str) -> str:
        if self.report is None:
            return 'failed'
        percent = self.report.percent(metric)
        return 'n/a' if percent is None else str(percent)

    def fraction(self, metric: str) -> str:
        value = None if self.report is None else getattr(self.report, metric)
        return '' if value is None else f'{value:.4f}'

    def to_dict(self, include_timing: bool) -> dict[str, Any]:
        data: dict[str, Any] = {
            'metrics': self.report.as_dict() if self.report else None,
            'error': self.error,
        }
        if include_timing and self.seconds is not None:
            data['seconds'] = round(self.seconds, 3)
        return data

    @classmethod
    def from_dict(cls, name: str, data: dict[str, Any]) -> 'ColumnResult':
        metrics = data.get('metrics')
        return cls(
            name,
            MetricsReport.from_dict(metrics) if metrics else None,
            data.get('error'),
            data.get('seconds'),
        )


@dataclass(frozen=True, eq=False)
class ComparisonTable:
    """
    Metrics (rows) by model (columns), in the fixed column order. ``provenance``
    records the seed, config hash and dataset sizes behind every number.
    """

    columns: tuple[ColumnResult, ...]
    provenance: dict[str, Any] = field(default_factory=dict)
    cnn_history: Optional[TrainHistory] = None

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def reproducible(self) -> bool:
        return bool(self.provenance.get('reproducible'))

    def column(self, name: str) -> ColumnResult:
        for column in self.columns:
            if column.name == name:
                return column
        raise KeyError(name)

    def cell(self, metric: str, column: str) -> Optional[int]:
        report = self.column(column).report
        return None if report is None else report.percent(metric)

    @property
    def failures(self) -> dict[str, str]:
        return {c.name: c.error or 'failed' for c in self.columns if c.failed}

    def to_dict(self) -> dict[str, Any]:
        include_timing = not self.reproducible
        return {
            'columns': self.column_names,
            'results': {c.name: c.to_dict(include_timing) for c in self.columns},
            'provenance': self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'ComparisonTable':
        return cls(
            columns=tuple(
                ColumnResult.from_dict(name, data['results'][name])
                for name in data['columns']
            ),
            provenance=data.get('provenance', {}),
        )


PROVENANCE_LABELS = {
    'name': 'Experiment',
    'seed': 'Seed',
    'config_hash': 'Config hash',
    'rows': 'Feature rows',
    'split': 'Split (train/validation/test)',
    'images': 'Images',
}


def _provenance_lines(table: ComparisonTable) -> list[str]:
    lines = []
    for key, label in PROVENANCE_LABELS.items():
        if key not in table.provenance:
            continue
        value = table.provenance[key]
        if isinstance(value, (list, tuple)):
            value = '/'.join(str(v) for v in value)
        lines.append(f'{label}: {value}')
    for name, error in table.failures.items():
        lines.append(f'{name} failed: {error}')
    if not table.reproducible:
        for column in table.columns:
            if column.seconds is not None:
                lines.append(f'{column.name} seconds: {column.seconds:.3f}')
    return lines


def _render_markdown(table: ComparisonTable) -> str:
    header = ['Metric', *table.column_names]
    lines = [
        '| ' + ' | '.join(header) + ' |',
        '| ' + ' | '.join(['---'] + ['---:'] * len(table.columns)) + ' |',
    ]
    for metric in METRIC_NAMES:
        cells = [METRIC_LABELS[metric], *(c.cell(metric) for c in table.columns)]
        lines.append('| ' + ' | '.join(cells) + ' |')
    lines.append('')
    lines.extend(f'- {line}' for line in _provenance_lines(table))
    return '\n'.join(lines) + '\n'


def _render_csv(table: ComparisonTable) -> str:
    rows = []
    for metric in METRIC_NAMES:
        row = {'metric': METRIC_LABELS[metric]}
        row.update({c.name: c.cell(metric) for c in table.columns})
        row.update({f'{c.name} fraction': c.fraction(metric) for c in table.columns})
        rows.append(row)
    header = ''.join(f'# {line}\n' for line in _provenance_lines(table))
    return header + pd.DataFrame(rows).to_csv(index=False, lineterminator='\n')


def _render_json(table: ComparisonTable) -> str:
    return json.dumps(table.to_dict(), indent=2, sort_keys=True) + '\n'


RENDERERS: dict[str, Callable[[ComparisonTable], str]] = {
    'markdown': _render_markdown,
    'csv': _render_csv,
    'json': _render_json,
}


def render(table: ComparisonTable, format: str = 'markdown') -> str:
    """
    Render the table. Cells are whole percents (half away from zero); failed models
    show ``failed`` and undefined metrics ``n/a``. Wall times are left out when the
    run was reproducible, so such reports are byte-identical across runs.
    """
    if format not in RENDERERS:
        raise ValueError(
            f'Unknown format "{format}"; expected one of {", ".join(FORMATS)}'
        )
    return RENDERERS[format](table)


def persist(
    table: ComparisonTable, out_dir: Union[str, Path], formats=FORMATS
) -> list[Path]:
    """
    Write ``report.<ext>`` per format (report.json always, so the run can be reloaded)
    and ``history.csv`` when the CNN was trained.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for format in dict.fromkeys([*formats, 'json']):
        path = out_dir / FORMAT_FILES[format]
        path.write_text(render(table, format), encoding='utf-8')
        written.append(path)
    if table.cnn_history is not None:
        written.append(
            table.cnn_history.to_csv(
                out_dir / 'history.csv', include_seconds=not table.reproducible
            )
        )
    logger.info(f'Wrote {", ".join(p.name for p in written)} to {out_dir}')
    return written


def load_report(path: Union[str, Path]) -> ComparisonTable:
    """Reload a persisted run from its directory or its report.json."""
    path = Path(path)
    if path.is_dir():
        path = path / FORMAT_FILES['json']
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f'Cannot read report {path}: {e}') from e
    return ComparisonTable.from_dict(data)


# --- Running -----------------------------------------------------------------------


def _check_paths(config: ExperimentConfig) -> None:
    if config.classifiers or config.grids:
        if not config.feature_csv:
            raise ConfigError('[data] feature_csv is required for the classical models')
        if not Path(config.feature_csv).is_file():
            raise DatasetError(f'Feature file {config.feature_csv} does not exist')
    if config.cnn_enabled:
        if not config.image_root:
            raise ConfigError('[data] image_root is required when the CNN is enabled')
        if not Path(config.image_root).is_dir():
            raise DatasetError(f'Image root {config.image_root} is not a directory')


def load_features(config: ExperimentConfig) -> FeatureTable:
    return load_feature_table(
        config.feature_csv, config.feature_columns, config.class_column
    )


def _score_classifier_safe(
    spec: ClassifierSpec,
    train_table: FeatureTable,
    test_table: FeatureTable,
    scaler: Scaler,
) -> ColumnResult:
    """Fit and score one classifier; a failure becomes a failed column."""
    name = DISPLAY_NAMES[spec.kind]
    started = time.perf_counter()
    try:
        X_train, X_test = train_table.features, test_table.features
        if spec.kind in SCALED_KINDS:
            X_train, X_test = scaler.apply(X_train), scaler.apply(X_test)
        model = fit(spec, X_train, train_table.labels)
        report = evaluate(predict(model, X_test), test_table.labels)
    except Exception as e:
        logger.error(f'{name} failed: {e}')
        seconds = time.perf_counter() - started
        return ColumnResult(name, error=str(e) or repr(e), seconds=seconds)

    seconds = time.perf_counter() - started
    logger.info(f'{name}: test accuracy {report.accuracy:.4f} ({seconds:.2f}s)')
    return ColumnResult(name, report, seconds=seconds)


def _score_cnn_safe(
    config: ExperimentConfig, provenance: dict[str, Any]
) -> tuple[Optional[TrainHistory], ColumnResult, ColumnResult]:
    """Train the CNN once and score it on its train and test splits."""
    started = time.perf_counter()
    try:
        size = config.cnn.image_size
        images = load_image_set(config.image_root, (size, size))
        provenance['images'] = len(images)
        split = stratified_split(images, config.split_spec)
        network, history = train(config.cnn, split)
        train_seconds = time.perf_counter() - started

        evaluated = time.perf_counter()
        train_report = evaluate_network(network, split.train)
        test_report = evaluate_network(network, split.test)
        test_seconds = time.perf_counter() - evaluated
    except Exception as e:
        logger.error(f'CNN failed: {e}')
        message = str(e) or repr(e)
        seconds = time.perf_counter() - started
        return (
            None,
            ColumnResult(CNN_TRAIN, error=message, seconds=seconds),
            ColumnResult(CNN_TEST, error=message, seconds=None),
        )

    logger.info(
        f'CNN: train accuracy {train_report.accuracy:.4f}, '
        f'test accuracy {test_report.accuracy:.4f}'
    )
    return (
        history,
        ColumnResult(CNN_TRAIN, train_report, seconds=train_seconds),
        ColumnResult(CNN_TEST, test_report, seconds=test_seconds),
    )


def run_benchmark(
    config: ExperimentConfig, n_jobs: Optional[int] = None
) -> ComparisonTable:
    """
    Run every enabled model on one stratified split and collect the comparison.

    Classical models train on train + validation and are scored on the test part;
    the validation part is only used for CNN model selection. A model that fails
    gets a failed column and the run carries on.
    """
    _check_paths(config)
    reproducible = config.reproducible
    if reproducible is None:
        reproducible = get_setting('REPRODUCIBLE')
    n_jobs = n_jobs or config.n_jobs or get_setting('N_JOBS')
    provenance: dict[str, Any] = {
        'name': config.name,
        'seed': config.seed,
        'config_hash': config_hash(config),
        'reproducible': bool(reproducible),
    }
    logger.info(f'Benchmark "{config.name}" (seed {config.seed}, {n_jobs} worker(s))')

    results: dict[str, ColumnResult] = {}
    if config.classifiers:
        table = load_features(config)
        split = stratified_split(table, config.split_spec)
        provenance['rows'] = len(table)
        provenance['split'] = [len(split.train), len(split.validation), len(split.test)]

        train_table = FeatureTable.concat([split.train, split.validation])
        scaler = fit_scaler(train_table, config.scaler)
        with ThreadPoolExecutor(max_workers=n_jobs) as executor:
            futures = [
                executor.submit(
                    _score_classifier_safe, spec, train_table, split.test, scaler
                )
                for spec in config.classifiers
            ]
            for future in futures:
                result = future.result()
                results[result.name] = result

    history = None
    if config.cnn_enabled:
        history, train_column, test_column = _score_cnn_safe(config, provenance)
        results[CNN_TRAIN] = train_column
        results[CNN_TEST] = test_column

    columns = tuple(results[name] for name in COLUMN_ORDER if name in results)
    failed = [c.name for c in columns if c.failed]
    if failed:
        logger.warning(f'Benchmark finished with failures: {", ".join(failed)}')
    return ComparisonTable(columns, provenance, history)


def run_searches(
    config: ExperimentConfig, n_jobs: Optional[int] = None
) -> list[SearchReport]:
    """Cross-validate every ``[grid.<kind>]`` on train + validation; test stays unseen."""
    if not config.grids:
        raise ConfigError('The config declares no [grid.<kind>] sections')
    _check_paths(config.replace(cnn_enabled=False))

    table = load_features(config)
    split = stratified_split(table, config.split_spec)
    pool = FeatureTable.concat([split.train, split.validation])
    return [
        search(
            grid,
            pool,
            k=config.folds,
            seed=config.seed,
            n_jobs=n_jobs or config.n_jobs,
            max_trials=config.max_trials,
            trial_timeout=config.trial_timeout,
        )
        for grid in config.grids
    ]


def persist_searches(
    reports: list[SearchReport], out_dir: Union[str, Path], include_timing: bool = True
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / 'search.csv'
    frame = pd.concat([r.to_frame(include_timing) for r in reports], ignore_index=True)
    frame.to_csv(csv_path, index=False, lineterminator='\n')

    json_path = out_dir / 'search.json'
    documents = [json.loads(r.to_json(include_timing=include_timing)) for r in reports]
    json_path.write_text(json.dumps(documents, indent=2, sort_keys=True) + '\n')
    return [csv_path, json_path]
