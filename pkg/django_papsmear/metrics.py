import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

import numpy as np

from .data import BinaryLabel

logger = logging.getLogger(__name__)

METRIC_NAMES = ('accuracy', 'recall', 'precision', 'specificity', 'f1')

METRIC_LABELS = {
    'accuracy': 'Accuracy',
    'recall': 'Recall',
    'precision': 'Precision',
    'specificity': 'Specificity',
    'f1': 'F1 Score',
}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ('tp', 'tn', 'fp', 'fn'):
            if getattr(self, name) < 0:
                raise ValueError(f'{name} must be non-negative')

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    def as_dict(self) -> dict[str, int]:
        return {'tp': self.tp, 'tn': self.tn, 'fp': self.fp, 'fn': self.fn}


@dataclass(frozen=True)
class MetricsReport:
    """
    The five derived metrics. A metric whose denominator is zero is ``None``
    (undefined) rather than 0 or NaN.
    """

    confusion: ConfusionMatrix
    accuracy: Optional[float]
    recall: Optional[float]
    precision: Optional[float]
    specificity: Optional[float]
    f1: Optional[float]

    @property
    def defined_flags(self) -> dict[str, bool]:
        return {name: getattr(self, name) is not None for name in METRIC_NAMES}

    def percent(self, name: str) -> Optional[int]:
        value = getattr(self, name)
        return None if value is None else round_percent(value)

    def as_dict(self) -> dict:
        """Flat record: raw fractions (4 dp), whole percents, counts, defined flags."""
        record: dict = {}
        for name in METRIC_NAMES:
            value = getattr(self, name)
            record[name] = None if value is None else round(value, 4)
            record[f'{name}_percent'] = self.percent(name)
            record[f'{name}_defined'] = value is not None
        record.update(self.confusion.as_dict())
        return record

    @classmethod
    def from_dict(cls, record: dict) -> 'MetricsReport':
        """Rebuild from ``as_dict`` output; the metrics are recomputed from the counts."""
        return compute_metrics(
            ConfusionMatrix(record['tp'], record['tn'], record['fp'], record['fn'])
        )


def round_percent(fraction: float) -> int:
    """fraction * 100 rounded half away from zero (0.845 -> 85)."""
    # repr() keeps the shortest decimal form, so 0.845 is not seen as 0.84499...
    scaled = Decimal(repr(float(fraction))) * 100
    return int(scaled.quantize(Decimal('1'), rounding=ROUND_HALF_UP))


def confusion(
    predictions, truth, positive: BinaryLabel = BinaryLabel.ABNORMAL
) -> ConfusionMatrix:
    """
    Count TP/TN/FP/FN with ``positive`` as the positive class.

    Args:
        predictions: Sequence of BinaryLabel (or 0/1)
        truth: Sequence of BinaryLabel (or 0/1), same length
        positive: The class counted as positive; abnormal everywhere in this package

    Raises:
        ValueError: On length mismatch or empty input
    """
    predicted = np.asarray(predictions, dtype=np.int64).ravel()
    actual = np.asarray(truth, dtype=np.int64).ravel()
    if predicted.shape != actual.shape:
        raise ValueError(
            f'Length mismatch: {predicted.size} predictions vs {actual.size} labels'
        )
    if predicted.size == 0:
        raise ValueError('Cannot build a confusion matrix from no samples')

    predicted_positive = predicted == int(positive)
    actually_positive = actual == int(positive)
    return ConfusionMatrix(
        tp=int(np.sum(predicted_positive & actually_positive)),
        tn=int(np.sum(~predicted_positive & ~actually_positive)),
        fp=int(np.sum(predicted_positive & ~actually_positive)),
        fn=int(np.sum(~predicted_positive & actually_positive)),
    )


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise ValueError('Cannot compute metrics over zero samples')

    recall = _ratio(cm.tp, cm.tp + cm.fn)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    if recall is None or precision is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)

    return MetricsReport(
        confusion=cm,
        accuracy=(cm.tp + cm.tn) / cm.total,
        recall=recall,
        precision=precision,
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
        f1=f1,
    )


def evaluate(predictions, truth) -> MetricsReport:
    return compute_metrics(confusion(predictions, truth))
