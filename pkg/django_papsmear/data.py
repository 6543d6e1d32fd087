import enum
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, TypeVar, Union

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from .conf import get_setting
from .exceptions import DatasetError

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = ('.bmp', '.png', '.jpg', '.jpeg')


class CellClass(enum.Enum):
    """The seven Herlev cell classes, in the dataset's 1-7 numbering order."""

    SUPERFICIAL_SQUAMOUS = 'superficial_squamous_epithelial'
    INTERMEDIATE_SQUAMOUS = 'intermediate_squamous_epithelial'
    COLUMNAR = 'columnar_epithelial'
    MILD_DYSPLASIA = 'mild_dysplasia'
    MODERATE_DYSPLASIA = 'moderate_dysplasia'
    SEVERE_DYSPLASIA = 'severe_dysplasia'
    CARCINOMA_IN_SITU = 'carcinoma_in_situ'

    def __str__(self):
        return self.value


class BinaryLabel(enum.IntEnum):
    NORMAL = 0
    ABNORMAL = 1

    def __str__(self):
        return self.name.lower()


ABNORMAL_CLASSES = frozenset(
    {
        CellClass.MILD_DYSPLASIA,
        CellClass.MODERATE_DYSPLASIA,
        CellClass.SEVERE_DYSPLASIA,
        CellClass.CARCINOMA_IN_SITU,
    }
)

# Folder names used by the public Herlev distribution
CLASS_ALIASES = {
    'normal_superficiel': CellClass.SUPERFICIAL_SQUAMOUS,
    'normal_superficial': CellClass.SUPERFICIAL_SQUAMOUS,
    'normal_intermediate': CellClass.INTERMEDIATE_SQUAMOUS,
    'normal_columnar': CellClass.COLUMNAR,
    'light_dysplastic': CellClass.MILD_DYSPLASIA,
    'moderate_dysplastic': CellClass.MODERATE_DYSPLASIA,
    'severe_dysplastic': CellClass.SEVERE_DYSPLASIA,
    'carcinoma_in_situ': CellClass.CARCINOMA_IN_SITU,
}


def to_binary(cell_class: CellClass) -> BinaryLabel:
    """Map a Herlev class to normal/abnormal (dysplasias and carcinoma are abnormal)."""
    if cell_class in ABNORMAL_CLASSES:
        return BinaryLabel.ABNORMAL
    return BinaryLabel.NORMAL


def _normalize_name(value: str) -> str:
    return re.sub(r'[\s\-]+', '_', value.strip().lower())


def parse_cell_class(value: Union[str, int, CellClass]) -> CellClass:
    """
    Parse a class cell from a CSV or a directory name.

    Accepts the canonical names (any case, spaces/hyphens/underscores), the Herlev
    folder aliases, and the integers 1-7.
    """
    if isinstance(value, CellClass):
        return value

    members = list(CellClass)
    text = str(value).strip()
    if text.isdigit():
        number = int(text)
        if 1 <= number <= len(members):
            return members[number - 1]
        raise ValueError(f'Class number {number} is outside 1-{len(members)}')

    name = _normalize_name(text)
    for member in members:
        if member.value == name:
            return member
    if name in CLASS_ALIASES:
        return CLASS_ALIASES[name]
    raise ValueError(f'Unknown cell class "{value}"')


@dataclass(frozen=True)
class Sample:
    features: tuple[float, ...]
    cell_class: CellClass
    label: BinaryLabel


class LabeledDataset(Protocol):
    labels: np.ndarray

    def __len__(self) -> int: ...

    def take(self, indices: np.ndarray): ...


DatasetT = TypeVar('DatasetT', 'FeatureTable', 'ImageSet')


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """
    Immutable feature matrix with per-row cell class and binary label.

    ``features`` is an (n, d) float64 array and ``labels`` an (n,) int array with
    1 = abnormal. Both are read-only so a table can be shared across threads.
    """

    column_names: tuple[str, ...]
    features: np.ndarray
    cell_classes: tuple[CellClass, ...]
    labels: np.ndarray = field(init=False)

    def __post_init__(self):
        features = _frozen(np.asarray(self.features, dtype=np.float64))
        if features.ndim != 2 or features.shape[0] == 0:
            raise DatasetError('A feature table needs at least one row')
        if features.shape[1] != len(self.column_names):
            raise DatasetError(
                f'Feature table has {features.shape[1]} columns but '
                f'{len(self.column_names)} column names'
            )
        if len(self.cell_classes) != features.shape[0]:
            raise DatasetError('Every row needs exactly one cell class')
        if not np.all(np.isfinite(features)):
            row = int(np.argwhere(~np.isfinite(features))[0][0])
            raise DatasetError(f'Row {row + 1} has a non-finite feature value')

        object.__setattr__(self, 'column_names', tuple(self.column_names))
        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'cell_classes', tuple(self.cell_classes))
        labels = np.array([int(to_binary(c)) for c in self.cell_classes], dtype=np.int64)
        object.__setattr__(self, 'labels', _frozen(labels))

    def __len__(self):
        return self.features.shape[0]

    def __getitem__(self, index: int) -> Sample:
        cell_class = self.cell_classes[index]
        return Sample(
            features=tuple(float(v) for v in self.features[index]),
            cell_class=cell_class,
            label=to_binary(cell_class),
        )

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> dict[CellClass, int]:
        counts = Counter(self.cell_classes)
        return {c: counts[c] for c in CellClass if counts[c]}

    @property
    def label_counts(self) -> dict[BinaryLabel, int]:
        return {
            label: int(np.sum(self.labels == label))
            for label in BinaryLabel
        }

    def take(self, indices) -> 'FeatureTable':
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureTable(
            column_names=self.column_names,
            features=self.features[indices],
            cell_classes=tuple(self.cell_classes[i] for i in indices),
        )

    @classmethod
    def concat(cls, tables: list['FeatureTable']) -> 'FeatureTable':
        if not tables:
            raise DatasetError('Nothing to concatenate')
        return cls(
            column_names=tables[0].column_names,
            features=np.vstack([t.features for t in tables]),
            cell_classes=tuple(c for t in tables for c in t.cell_classes),
        )


@dataclass(frozen=True, eq=False)
class ImageSample:
    pixels: np.ndarray
    label: BinaryLabel
    cell_class: Optional[CellClass] = None

    def __post_init__(self):
        pixels = _frozen(np.asarray(self.pixels, dtype=np.float64))
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise DatasetError(f'Image must be (H, W, 3), got {pixels.shape}')
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise DatasetError('Image values must lie in [0, 1]')
        object.__setattr__(self, 'pixels', pixels)


@dataclass(frozen=True, eq=False)
class ImageSet:
    """Stacked images (n, H, W, 3) in [0, 1] with labels and source paths."""

    pixels: np.ndarray
    labels: np.ndarray
    cell_classes: tuple[Optional[CellClass], ...] = ()
    paths: tuple[str, ...] = ()

    def __post_init__(self):
        pixels = _frozen(np.asarray(self.pixels, dtype=np.float64))
        labels = _frozen(np.asarray(self.labels, dtype=np.int64))
        if pixels.ndim != 4 or pixels.shape[3] != 3:
            raise DatasetError(f'Image set must be (n, H, W, 3), got {pixels.shape}')
        if pixels.shape[0] != labels.shape[0]:
            raise DatasetError('Image count and label count differ')
        object.__setattr__(self, 'pixels', pixels)
        object.__setattr__(self, 'labels', labels)
        if not self.cell_classes:
            object.__setattr__(self, 'cell_classes', (None,) * len(labels))
        if not self.paths:
            object.__setattr__(self, 'paths', ('',) * len(labels))

    def __len__(self):
        return self.pixels.shape[0]

    def __getitem__(self, index: int) -> ImageSample:
        return ImageSample(
            pixels=self.pixels[index],
            label=BinaryLabel(int(self.labels[index])),
            cell_class=self.cell_classes[index],
        )

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.pixels.shape[1:])  # type: ignore[return-value]

    def take(self, indices) -> 'ImageSet':
        indices = np.asarray(indices, dtype=np.int64)
        return ImageSet(
            pixels=self.pixels[indices],
            labels=self.labels[indices],
            cell_classes=tuple(self.cell_classes[i] for i in indices),
            paths=tuple(self.paths[i] for i in indices),
        )


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.15
    validation_fraction: float = 0.15
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        for name in ('test_fraction', 'validation_fraction'):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise DatasetError(f'{name} must lie in (0, 1), got {value}')
        if not 0 <= self.seed < 2**64:
            raise DatasetError(f'seed must be a 64-bit unsigned integer, got {self.seed}')


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: LabeledDataset
    validation: LabeledDataset
    test: LabeledDataset
    train_indices: np.ndarray
    validation_indices: np.ndarray
    test_indices: np.ndarray


# --- CSV loading -------------------------------------------------------------------


_LONG_ROW = re.compile(r'Expected (\d+) fields in line (\d+), saw (\d+)')


def _parser_error_message(path: Path, error: Exception, n_features: int) -> str:
    """Restate a pandas over-long row error with the data-row number."""
    match = _LONG_ROW.search(str(error))
    if match is None:
        return f'{path}: {error}'
    expected, line, saw = (int(group) for group in match.groups())
    # pandas counts file lines from 1 and the header is line 1
    return (
        f'{path}: row {line - 1} has {saw} fields, expected {expected} '
        f'({n_features} features + class)'
    )


def load_feature_table(
    path: Union[str, Path],
    schema: Optional[list[str]] = None,
    class_column: Optional[str] = None,
) -> FeatureTable:
    """
    Load and validate a feature CSV (header row, one sample per row).

    Args:
        path: CSV file, UTF-8 with ``.`` as decimal point
        schema: The feature column names, in order. Defaults to the 20 Herlev columns.
        class_column: Column holding the class name or number 1-7

    Raises:
        DatasetError: naming the row (1-based, header excluded) for a missing column,
            a short or long row, a non-numeric or non-finite cell, or an unknown class
    """
    path = Path(path)
    schema = list(schema or get_setting('FEATURE_COLUMNS'))
    class_column = class_column or get_setting('CLASS_COLUMN')

    if not path.is_file():
        raise DatasetError(f'Feature file {path} does not exist')

    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            encoding='utf-8',
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        raise DatasetError(_parser_error_message(path, e, len(schema))) from e
    except (UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise DatasetError(f'{path}: cannot read as CSV: {e}') from e

    missing = [c for c in [*schema, class_column] if c not in frame.columns]
    if missing:
        raise DatasetError(f'{path}: missing column(s) {", ".join(missing)}')
    if frame.empty:
        raise DatasetError(f'{path}: no data rows')

    expected_fields = len(frame.columns)
    features = np.empty((len(frame), len(schema)), dtype=np.float64)
    cell_classes = []

    for row_number, (_, row) in enumerate(frame.iterrows(), start=1):
        # Short rows are padded by pandas with NaN (empty cells stay '')
        present = int(row.notna().sum())
        if present != expected_fields:
            raise DatasetError(
                f'{path}: row {row_number} has {present} fields, expected '
                f'{expected_fields} ({len(schema)} features + class)'
            )

        for col_index, column in enumerate(schema):
            raw = row[column]
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise DatasetError(
                    f'{path}: row {row_number}, column "{column}": '
                    f'non-numeric value "{raw}"'
                ) from None
            if not math.isfinite(value):
                raise DatasetError(
                    f'{path}: row {row_number}, column "{column}": '
                    f'non-finite value "{raw}"'
                )
            features[row_number - 1, col_index] = value

        try:
            cell_classes.append(parse_cell_class(row[class_column]))
        except ValueError as e:
            raise DatasetError(f'{path}: row {row_number}: {e}') from None

    table = FeatureTable(
        column_names=tuple(schema), features=features, cell_classes=tuple(cell_classes)
    )
    logger.info(
        f'Loaded {len(table)} samples from {path} '
        f'({len(table.class_counts)} classes, '
        f'{table.label_counts[BinaryLabel.ABNORMAL]} abnormal)'
    )
    return table


# --- Splitting ---------------------------------------------------------------------


def _round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def _stratum_quotas(strata: dict[int, np.ndarray], fraction: float) -> dict[int, int]:
    """Floor per stratum; the rounding remainder goes to the largest stratum."""
    total = sum(len(members) for members in strata.values())
    target = _round_half_up(total * fraction)
    quotas = {
        label: math.floor(len(members) * fraction) for label, members in strata.items()
    }
    largest = max(strata, key=lambda label: (len(strata[label]), -label))
    quotas[largest] += target - sum(quotas.values())
    quotas[largest] = min(max(quotas[largest], 0), len(strata[largest]))
    return quotas


def split_indices(
    labels, spec: SplitSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Partition ``range(len(labels))`` into sorted (train, validation, test) indices.

    The test part takes ``test_fraction`` of all rows; validation takes
    ``validation_fraction`` of what remains.
    """
    labels = np.asarray(labels)
    present = set(np.unique(labels).tolist())
    for label in BinaryLabel:
        if int(label) not in present:
            raise DatasetError(f'Cannot split: no samples labelled {label}')

    rng = np.random.default_rng(spec.seed)

    if spec.stratified:
        strata = {
            int(label): rng.permutation(np.flatnonzero(labels == label))
            for label in BinaryLabel
        }
    else:
        strata = {0: rng.permutation(len(labels))}

    test_quota = _stratum_quotas(strata, spec.test_fraction)
    test = {label: members[: test_quota[label]] for label, members in strata.items()}
    rest = {label: members[test_quota[label] :] for label, members in strata.items()}

    validation_quota = _stratum_quotas(rest, spec.validation_fraction)
    validation = {
        label: members[: validation_quota[label]] for label, members in rest.items()
    }
    train = {label: members[validation_quota[label] :] for label, members in rest.items()}

    def gather(parts):
        return np.sort(np.concatenate(list(parts.values()))).astype(np.int64)

    return gather(train), gather(validation), gather(test)


def stratified_split(dataset: DatasetT, spec: SplitSpec) -> DatasetSplit:
    """Split a FeatureTable or ImageSet into disjoint train/validation/test parts."""
    train_idx, validation_idx, test_idx = split_indices(dataset.labels, spec)
    logger.info(
        f'Split {len(dataset)} samples into {len(train_idx)} train / '
        f'{len(validation_idx)} validation / {len(test_idx)} test (seed {spec.seed})'
    )
    return DatasetSplit(
        train=dataset.take(train_idx),
        validation=dataset.take(validation_idx),
        test=dataset.take(test_idx),
        train_indices=train_idx,
        validation_indices=validation_idx,
        test_indices=test_idx,
    )


# --- Scaling -----------------------------------------------------------------------


class ScalerKind(str, enum.Enum):
    ZSCORE = 'zscore'
    MINMAX = 'minmax'
    NONE = 'none'


@dataclass(frozen=True, eq=False)
class Scaler:
    """
    Per-feature affine transform ``(x - offset) / scale``.

    For zscore the pair is (mean, population std); for minmax (min, max - min).
    Zero scales are clamped to 1 and listed in ``constant_features``.
    """

    kind: ScalerKind
    offset: np.ndarray
    scale: np.ndarray
    constant_features: tuple[int, ...] = ()

    def apply(self, samples):
        X = _as_matrix(samples)
        if self.kind == ScalerKind.NONE:
            return X.copy()
        return (X - self.offset) / self.scale

    def inverse(self, samples):
        X = _as_matrix(samples)
        if self.kind == ScalerKind.NONE:
            return X.copy()
        return X * self.scale + self.offset

    @property
    def per_feature_stats(self) -> list[tuple[float, float]]:
        if self.kind == ScalerKind.MINMAX:
            return [(float(o), float(o + s)) for o, s in zip(self.offset, self.scale)]
        return [(float(o), float(s)) for o, s in zip(self.offset, self.scale)]

    def to_dict(self) -> dict:
        return {
            'kind': self.kind.value,
            'offset': self.offset.tolist(),
            'scale': self.scale.tolist(),
            'constant_features': list(self.constant_features),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Scaler':
        return cls(
            kind=ScalerKind(data['kind']),
            offset=np.asarray(data['offset'], dtype=np.float64),
            scale=np.asarray(data['scale'], dtype=np.float64),
            constant_features=tuple(data.get('constant_features', ())),
        )


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, FeatureTable):
        return samples.features
    X = np.asarray(samples, dtype=np.float64)
    return X.reshape(1, -1) if X.ndim == 1 else X


def fit_scaler(train, kind: Union[ScalerKind, str] = ScalerKind.ZSCORE) -> Scaler:
    """Fit a scaler on training rows only."""
    kind = ScalerKind(kind)
    X = _as_matrix(train)
    n_features = X.shape[1]

    if kind == ScalerKind.NONE:
        return Scaler(kind, np.zeros(n_features), np.ones(n_features))

    if kind == ScalerKind.ZSCORE:
        offset = X.mean(axis=0)
        scale = X.std(axis=0)
    else:
        offset = X.min(axis=0)
        scale = X.max(axis=0) - offset

    constant = tuple(int(i) for i in np.flatnonzero(scale == 0.0))
    if constant:
        logger.warning(
            f'Constant feature(s) {list(constant)} have zero spread; scale clamped to 1'
        )
        scale = np.where(scale == 0.0, 1.0, scale)

    return Scaler(kind, offset, scale, constant)


def apply_scaler(scaler: Scaler, samples):
    """Transform a FeatureTable (returns a new table) or a raw matrix."""
    if isinstance(samples, FeatureTable):
        return FeatureTable(
            column_names=samples.column_names,
            features=scaler.apply(samples.features),
            cell_classes=samples.cell_classes,
        )
    return scaler.apply(samples)


# --- Images ------------------------------------------------------------------------


def load_image(
    path: Union[str, Path],
    target: tuple[int, int] = (64, 64),
    cell_class: Optional[CellClass] = None,
) -> ImageSample:
    """
    Decode an image, convert to RGB, bilinear-resize to ``target`` and scale to [0, 1].

    The class is taken from the parent directory name unless given.
    """
    path = Path(path)
    if cell_class is None:
        try:
            cell_class = parse_cell_class(path.parent.name)
        except ValueError:
            raise DatasetError(
                f'{path}: directory "{path.parent.name}" is not a known cell class'
            ) from None

    try:
        with Image.open(path) as image:
            rgb = image.convert('RGB')
            height, width = target
            if rgb.size != (width, height):
                rgb = rgb.resize((width, height), Image.Resampling.BILINEAR)
            pixels = np.asarray(rgb, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise DatasetError(f'{path}: cannot decode image: {e}') from e

    return ImageSample(pixels=pixels, label=to_binary(cell_class), cell_class=cell_class)


def load_image_set(
    root: Union[str, Path], target: Optional[tuple[int, int]] = None
) -> ImageSet:
    """Load ``<root>/<class-dir>/*.bmp|png|jpg`` in sorted order."""
    root = Path(root)
    if target is None:
        size = get_setting('IMAGE_SIZE')
        target = (size, size)
    if not root.is_dir():
        raise DatasetError(f'Image root {root} is not a directory')

    samples = []
    paths = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            cell_class = parse_cell_class(class_dir.name)
        except ValueError:
            raise DatasetError(
                f'{class_dir}: directory is not a known cell class'
            ) from None

        for image_path in sorted(class_dir.iterdir()):
            if image_path.suffix.lower() not in IMAGE_EXTENSIONS:
                continue
            # Herlev ships segmentation masks next to the cells
            if image_path.stem.endswith('-d'):
                continue
            samples.append(load_image(image_path, target, cell_class))
            paths.append(str(image_path))

    if not samples:
        raise DatasetError(f'No images found under {root}')

    image_set = ImageSet(
        pixels=np.stack([s.pixels for s in samples]),
        labels=np.array([int(s.label) for s in samples]),
        cell_classes=tuple(s.cell_class for s in samples),
        paths=tuple(paths),
    )
    logger.info(
        f'Loaded {len(image_set)} images of shape {image_set.image_shape} from {root}'
    )
    return image_set


# --- Synthetic data ----------------------------------------------------------------


def synth_blobs(
    n_per_class: int, dims: int = 20, separation: float = 10.0, seed: int = 0
) -> FeatureTable:
    """
    Two unit-variance Gaussian clusters whose means differ by ``separation`` in
    every dimension. Normal rows are intermediate squamous cells, abnormal rows
    severe dysplasia.
    """
    if n_per_class < 1:
        raise ValueError(f'n_per_class must be >= 1, got {n_per_class}')
    if dims < 1:
        raise ValueError(f'dims must be >= 1, got {dims}')

    rng = np.random.default_rng(seed)
    normal = rng.normal(0.0, 1.0, size=(n_per_class, dims))
    abnormal = rng.normal(separation, 1.0, size=(n_per_class, dims))
    features = np.vstack([normal, abnormal])
    classes = [CellClass.INTERMEDIATE_SQUAMOUS] * n_per_class + [
        CellClass.SEVERE_DYSPLASIA
    ] * n_per_class

    order = rng.permutation(2 * n_per_class)
    return FeatureTable(
        column_names=tuple(f'x{i}' for i in range(dims)),
        features=features[order],
        cell_classes=tuple(classes[i] for i in order),
    )
