import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from ..data import DatasetSplit, ImageSet, SplitSpec, stratified_split
from ..exceptions import TrainingError
from ..metrics import MetricsReport, evaluate
from .network import Network, build_network, loss_bce, seed_streams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CnnConfig:
    """
    Architecture and optimisation settings of the CNN.

    The defaults describe the full-size network: 64x64 RGB input, four 3x3
    convolutions with 32/32/64/64 filters each followed by 2x2 max pooling, dropout
    0.4 before a 256-unit dense layer, Adam with the usual defaults, 50 epochs of
    batch size 32. ``reduced`` gives a network small enough for gradient checks.
    """

    image_size: int = 64
    channels: int = 3
    filters: tuple[int, ...] = (32, 32, 64, 64)
    kernel_size: int = 3
    pool_size: int = 2
    dense_units: int = 256
    dropout: float = 0.4
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    test_fraction: float = 0.15
    validation_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'filters', tuple(int(f) for f in self.filters))
        positive = (
            'image_size',
            'channels',
            'kernel_size',
            'pool_size',
            'dense_units',
            'batch_size',
            'learning_rate',
            'epsilon',
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f'{name} must be > 0, got {getattr(self, name)}')
        if not self.filters or min(self.filters) < 1:
            raise ValueError(
                f'filters must be a non-empty list of counts >= 1, got {self.filters}'
            )
        if self.kernel_size % 2 == 0:
            raise ValueError(f'kernel_size must be odd, got {self.kernel_size}')
        if self.epochs < 0:
            raise ValueError(f'epochs must be >= 0, got {self.epochs}')
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f'dropout must be in [0, 1), got {self.dropout}')
        for name in ('beta1', 'beta2'):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f'{name} must be in [0, 1), got {getattr(self, name)}')
        if self.image_size // self.pool_size ** len(self.filters) < 1:
            raise ValueError(
                f'{self.image_size}px input cannot go through {len(self.filters)} '
                f'{self.pool_size}x{self.pool_size} pools'
            )
        # Validates the fractions
        self.split_spec()

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.image_size, self.image_size, self.channels)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.test_fraction, self.validation_fraction, self.seed)

    def replace(self, **changes) -> 'CnnConfig':
        return replace(self, **changes)

    def as_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data['filters'] = list(self.filters)
        return data

    @classmethod
    def reduced(cls, **changes) -> 'CnnConfig':
        """8x8 input, two 2-filter convolutions and an 8-unit dense layer."""
        defaults: dict[str, Any] = {
            'image_size': 8,
            'filters': (2, 2),
            'dense_units': 8,
            'batch_size': 8,
        }
        defaults.update(changes)
        return cls(**defaults)


@dataclass
class TrainHistory:
    """Per-epoch training record; one entry per completed epoch."""

    train_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    COLUMNS = ('train_loss', 'train_accuracy', 'val_loss', 'val_accuracy', 'seconds')

    def __len__(self):
        return len(self.train_loss)

    def record(self, train_loss, train_accuracy, val_loss, val_accuracy, seconds) -> None:
        self.train_loss.append(float(train_loss))
        self.train_accuracy.append(float(train_accuracy))
        self.val_loss.append(float(val_loss))
        self.val_accuracy.append(float(val_accuracy))
        self.seconds.append(float(seconds))

    @property
    def best_epoch(self) -> int:
        """0-based epoch of the best validation accuracy (earliest on ties), or -1."""
        scores = np.nan_to_num(np.asarray(self.val_accuracy, dtype=np.float64), nan=-1.0)
        if scores.size == 0 or scores.max() < 0:
            return -1
        return int(np.argmax(scores))

    def to_frame(self, include_seconds: bool = True) -> pd.DataFrame:
        columns = [c for c in self.COLUMNS if include_seconds or c != 'seconds']
        frame = pd.DataFrame({c: getattr(self, c) for c in columns}, columns=columns)
        frame.insert(0, 'epoch', range(1, len(self) + 1))
        return frame

    def to_csv(self, path: Union[str, Path], include_seconds: bool = True) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame(include_seconds).to_csv(path, index=False)
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> 'TrainHistory':
        frame = pd.read_csv(path)
        return cls(
            **{
                c: frame[c].astype(float).tolist() if c in frame else [0.0] * len(frame)
                for c in cls.COLUMNS
            }
        )


class Adam:
    """Adam with bias correction, updating the parameter arrays in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for param, grad, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            step = (m / correction1) / (np.sqrt(v / correction2) + self.epsilon)
            param -= self.learning_rate * step


def _loss_and_accuracy(
    network: Network, images: ImageSet, batch_size: int
) -> tuple[float, float]:
    if len(images) == 0:
        return float('nan'), float('nan')
    p = network.predict_proba(images.pixels, batch_size)
    accuracy = float(np.mean((p >= 0.5).astype(np.int64) == images.labels))
    return loss_bce(p, images.labels), accuracy


def _check_images(config: CnnConfig, images: ImageSet) -> None:
    if images.image_shape != config.input_shape:
        raise ValueError(
            f'Images are {images.image_shape} but the network expects '
            f'{config.input_shape}'
        )


def train(
    config: CnnConfig, data: Union[ImageSet, DatasetSplit]
) -> tuple[Network, TrainHistory]:
    """
    Mini-batch Adam training of ``build_network(config)``.

    ``data`` is either a split of ImageSets or an ImageSet that is split here with
    ``config.split_spec()``. Batches are reshuffled every epoch from the config seed,
    so a fixed seed reproduces the loss curve. The returned network carries the
    weights of the epoch with the best validation accuracy (the last epoch when
    there is no validation data).

    Raises:
        TrainingError: The training loss became non-finite
    """
    if isinstance(data, ImageSet):
        split = stratified_split(data, config.split_spec())
    else:
        split = data
    train_set, validation_set = split.train, split.validation
    _check_images(config, train_set)
    if len(train_set) == 0:
        raise ValueError('Cannot train on an empty training split')

    network = build_network(config)
    optimizer = Adam(
        [value for _, _, value in network.parameters()],
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    )
    shuffle_rng = np.random.default_rng(seed_streams(config.seed)[2])
    history = TrainHistory()
    best_accuracy = -1.0
    best_weights = None

    logger.info(
        f'Training CNN for {config.epochs} epochs on {len(train_set)} images '
        f'({len(validation_set)} validation)'
    )
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(len(train_set))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            rows = order[start : start + config.batch_size]
            x, y = train_set.pixels[rows], train_set.labels[rows]
            p = network.forward(x, training=True)
            loss = loss_bce(p, y)
            if not np.isfinite(loss):
                raise TrainingError(
                    f'Non-finite training loss ({loss}) in epoch {epoch + 1}'
                )
            network.backward(y)
            optimizer.step(network.gradients())
            loss_sum += loss * len(rows)
            correct += int(np.sum((p >= 0.5) == y))

        val_loss, val_accuracy = _loss_and_accuracy(
            network, validation_set, config.batch_size
        )
        seconds = time.perf_counter() - started
        history.record(
            loss_sum / len(order), correct / len(order), val_loss, val_accuracy, seconds
        )
        logger.info(
            f'Epoch {epoch + 1}/{config.epochs}: loss {history.train_loss[-1]:.4f}, '
            f'accuracy {history.train_accuracy[-1]:.4f}, val_loss {val_loss:.4f}, '
            f'val_accuracy {val_accuracy:.4f} ({seconds:.1f}s)'
        )
        if np.isfinite(val_accuracy) and val_accuracy > best_accuracy:
            best_accuracy = val_accuracy
            best_weights = network.get_weights()

    if best_weights is not None:
        network.set_weights(best_weights)
        logger.info(
            f'Keeping weights of epoch {history.best_epoch + 1} '
            f'(val_accuracy {best_accuracy:.4f})'
        )
    return network, history


def predict_labels(
    network: Network, images: Union[ImageSet, np.ndarray], batch_size: int = 64
) -> np.ndarray:
    pixels = images.pixels if isinstance(images, ImageSet) else images
    return network.predict(pixels, batch_size=batch_size)


def evaluate_network(
    network: Network, images: ImageSet, batch_size: int = 64
) -> MetricsReport:
    return evaluate(predict_labels(network, images, batch_size), images.labels)
