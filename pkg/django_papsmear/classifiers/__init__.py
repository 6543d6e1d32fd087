"""
The seven classical classifiers behind one fit/predict contract.

    spec = ClassifierSpec('knn', {'k': 9})
    model = fit(spec, X_train, y_train)
    labels = predict(model, X_test)
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, NamedTuple, Optional, Union

import numpy as np

from ..data import BinaryLabel, Scaler
from ..exceptions import ConfigError
from .base import FittedModel
from .bayes import GnbModel, fit_gnb, predict_gnb
from .boosting import GbModel, fit_gboost, gb_leaf_weight, gb_split_gain
from .forest import ForestModel, fit_forest
from .linear import LogRegModel, fit_logreg, sigmoid
from .neighbors import KnnModel, fit_knn, minkowski, predict_knn
from .svm import SvmModel, fit_svm, rbf
from .tree import TreeModel, best_split, entropy, fit_tree

logger = logging.getLogger(__name__)

MODEL_FORMAT = 'django-papsmear/model'
MODEL_FORMAT_VERSION = 1

KINDS = ('logreg', 'knn', 'svm', 'gnb', 'dtree', 'rforest', 'gboost')

# Distance, margin and gradient models see z-scored features; the rest see raw ones
SCALED_KINDS = frozenset({'logreg', 'knn', 'svm'})

DISPLAY_NAMES = {
    'logreg': 'Logistic Regression',
    'knn': 'k-NN',
    'svm': 'SVM',
    'gnb': 'Naive Bayes',
    'dtree': 'Decision Tree',
    'rforest': 'Random Forest',
    'gboost': 'XGBoost-style',
}


def _optional(cast: Callable) -> Callable:
    def parse(value):
        if value is None or (isinstance(value, str) and value.strip().lower() == 'none'):
            return None
        return cast(value)

    return parse


def _boolean(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(f'not a boolean: {value!r}')


def _integer(value) -> int:
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f'not an integer: {value!r}')
    return int(value)


class Param(NamedTuple):
    cast: Callable
    default: Any
    arg: str = ''


PARAM_SCHEMA: dict[str, dict[str, Param]] = {
    'logreg': {
        'lr': Param(float, 0.1),
        'epochs': Param(_integer, 500),
        'l2': Param(float, 1e-4),
    },
    'knn': {
        'k': Param(_integer, 9),
        'p': Param(float, 2.0),
    },
    'svm': {
        'C': Param(float, 1.0),
        'gamma': Param(_optional(float), None),
        'tol': Param(float, 1e-3),
        'max_passes': Param(_integer, 100),
        'kernel': Param(str, 'rbf'),
        'seed': Param(_integer, 0),
    },
    'gnb': {
        'var_floor': Param(float, 1e-9),
    },
    'dtree': {
        'max_depth': Param(_optional(_integer), None),
        'min_samples_leaf': Param(_integer, 1),
    },
    'rforest': {
        'n_trees': Param(_integer, 100),
        'max_features': Param(_optional(_integer), None),
        'seed': Param(_integer, 0),
        'bootstrap': Param(_boolean, True),
        'max_depth': Param(_optional(_integer), None),
        'min_samples_leaf': Param(_integer, 1),
        'n_jobs': Param(_integer, 1),
    },
    'gboost': {
        'n_rounds': Param(_integer, 100),
        'eta': Param(float, 0.1),
        'lambda': Param(float, 1.0, arg='reg_lambda'),
        'gamma': Param(float, 0.0),
        'max_depth': Param(_integer, 4),
        'min_child_weight': Param(float, 1.0),
        'n_jobs': Param(_integer, 1),
    },
}

FITTERS: dict[str, Callable[..., FittedModel]] = {
    'logreg': fit_logreg,
    'knn': fit_knn,
    'svm': fit_svm,
    'gnb': fit_gnb,
    'dtree': fit_tree,
    'rforest': fit_forest,
    'gboost': fit_gboost,
}

MODEL_CLASSES: dict[str, type[FittedModel]] = {
    cls.kind: cls
    for cls in (
        LogRegModel, KnnModel, SvmModel, GnbModel, TreeModel, ForestModel, GbModel
    )
}


def validate_params(kind: str, params: dict[str, Any]) -> dict[str, Any]:
    """
    Check ``params`` against the schema of ``kind`` and return them merged over the
    defaults, cast to their declared types (so INI strings are accepted).

    Raises:
        ConfigError: Unknown kind, unknown parameter name, or uncastable value
    """
    if kind not in PARAM_SCHEMA:
        raise ConfigError(f'Unknown classifier kind "{kind}"; expected one of {KINDS}')
    schema = PARAM_SCHEMA[kind]

    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise ConfigError(
            f'Unknown parameter(s) for {kind}: {", ".join(unknown)} '
            f'(valid: {", ".join(schema)})'
        )

    resolved = {}
    for name, param in schema.items():
        if name not in params:
            resolved[name] = param.default
            continue
        try:
            resolved[name] = param.cast(params[name])
        except (TypeError, ValueError) as e:
            raise ConfigError(
                f'{kind}.{name}: invalid value {params[name]!r} ({e})'
            ) from e
    return resolved


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        validate_params(self.kind, self.params)

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self.kind]

    def resolved_params(self) -> dict[str, Any]:
        return validate_params(self.kind, self.params)

    def fit_kwargs(self) -> dict[str, Any]:
        schema = PARAM_SCHEMA[self.kind]
        return {
            schema[name].arg or name: value
            for name, value in self.resolved_params().items()
        }

    def as_dict(self) -> dict[str, Any]:
        return {'kind': self.kind, 'params': dict(self.params)}

    def __str__(self):
        args = ', '.join(f'{k}={v}' for k, v in self.params.items())
        return f'{self.kind}({args})'


def fit(spec: ClassifierSpec, X, y) -> FittedModel:
    model = FITTERS[spec.kind](X, y, **spec.fit_kwargs())
    logger.debug(f'Fitted {spec} on {len(y)} samples')
    return model


def predict(model: FittedModel, X) -> np.ndarray:
    return model.predict(X)


def predict_one(model: FittedModel, x) -> BinaryLabel:
    return BinaryLabel(int(model.predict(np.atleast_2d(x))[0]))


def predict_proba(model: FittedModel, X) -> np.ndarray:
    if not model.probabilistic:
        raise ValueError(f'{model.kind} models do not provide probabilities')
    return model.predict_proba(X)


# --- Persistence -------------------------------------------------------------------


def model_to_dict(
    model: FittedModel,
    spec: Optional[ClassifierSpec] = None,
    scaler: Optional[Scaler] = None,
) -> dict[str, Any]:
    return {
        'format': MODEL_FORMAT,
        'version': MODEL_FORMAT_VERSION,
        'kind': model.kind,
        'params': dict(spec.params) if spec else {},
        'state': model.get_state(),
        'scaler': scaler.to_dict() if scaler else None,
    }


class ModelBundle(NamedTuple):
    model: FittedModel
    spec: ClassifierSpec
    scaler: Optional[Scaler]


def model_from_dict(data: dict[str, Any]) -> ModelBundle:
    if data.get('format') != MODEL_FORMAT:
        raise ConfigError(f'Not a {MODEL_FORMAT} document')
    if data.get('version') != MODEL_FORMAT_VERSION:
        raise ConfigError(f'Unsupported model format version {data.get("version")}')
    kind = data['kind']
    if kind not in MODEL_CLASSES:
        raise ConfigError(f'Unknown model kind "{kind}"')

    model = MODEL_CLASSES[kind].from_state(data['state'])
    scaler = Scaler.from_dict(data['scaler']) if data.get('scaler') else None
    return ModelBundle(model, ClassifierSpec(kind, data.get('params', {})), scaler)


def save_model(
    model: FittedModel,
    path: Union[str, Path],
    spec: Optional[ClassifierSpec] = None,
    scaler: Optional[Scaler] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model, spec, scaler), indent=2))
    logger.info(f'Saved {model.kind} model to {path}')
    return path


def load_model(path: Union[str, Path]) -> ModelBundle:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f'Cannot read model file {path}: {e}') from e
    return model_from_dict(data)


__all__ = [
    'KINDS',
    'SCALED_KINDS',
    'DISPLAY_NAMES',
    'PARAM_SCHEMA',
    'ClassifierSpec',
    'FittedModel',
    'ModelBundle',
    'LogRegModel',
    'KnnModel',
    'SvmModel',
    'GnbModel',
    'TreeModel',
    'ForestModel',
    'GbModel',
    'validate_params',
    'fit',
    'predict',
    'predict_one',
    'predict_proba',
    'save_model',
    'load_model',
    'model_to_dict',
    'model_from_dict',
    'sigmoid',
    'fit_logreg',
    'minkowski',
    'fit_knn',
    'predict_knn',
    'rbf',
    'fit_svm',
    'fit_gnb',
    'predict_gnb',
    'entropy',
    'best_split',
    'fit_tree',
    'fit_forest',
    'gb_leaf_weight',
    'gb_split_gain',
    'fit_gboost',
]
