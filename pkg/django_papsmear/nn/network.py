import json
import logging
import struct
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, Optional, Union

import numpy as np

from ..exceptions import ConfigError
from .layers import (
    LAYER_TYPES,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool,
    ReLU,
    SigmoidOutput,
)

if TYPE_CHECKING:
    from .training import CnnConfig

logger = logging.getLogger(__name__)

# Probabilities are clamped to [PROBABILITY_CLIP, 1 - PROBABILITY_CLIP] inside the loss
PROBABILITY_CLIP = 1e-12

WEIGHTS_MAGIC = b'PAPSCNN\0'
WEIGHTS_VERSION = 1
_HEADER = struct.Struct('<8sII')


def seed_streams(seed: int) -> list[np.random.SeedSequence]:
    """Independent streams for weight init, dropout masks and batch shuffling."""
    return np.random.SeedSequence(seed).spawn(3)


class Network:
    """
    A sequential stack of layers ending in ``SigmoidOutput``.

    Construction infers (and logs) every intermediate shape, so an inconsistent stack
    fails here rather than mid-training. Weights are drawn from ``seed`` unless
    ``initialize`` is False (the loader fills them in afterwards).
    """

    def __init__(
        self,
        layers: list[Layer],
        input_shape: tuple[int, ...],
        seed: int = 0,
        initialize: bool = True,
    ):
        if not layers or not isinstance(layers[-1], SigmoidOutput):
            raise ValueError('A network must end with a SigmoidOutput layer')
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.seed = seed
        self.shapes = self._infer_shapes()

        init_stream, dropout_stream, _ = seed_streams(seed)
        if initialize:
            rng = np.random.default_rng(init_stream)
            for layer, shape in zip(self.layers, [self.input_shape, *self.shapes]):
                layer.initialize(shape, rng)
        dropout_rng = np.random.default_rng(dropout_stream)
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = dropout_rng

        self._probabilities: Optional[np.ndarray] = None

    def _infer_shapes(self) -> list[tuple[int, ...]]:
        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            logger.debug(f'{layer!r} -> {shape}')
            shapes.append(shape)
        return shapes

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def parameters(self) -> Iterator[tuple[int, str, np.ndarray]]:
        """(layer index, parameter name, array) in manifest order."""
        for index, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield index, name, value

    def gradients(self) -> list[np.ndarray]:
        return [self.layers[index].grads[name] for index, name, _ in self.parameters()]

    def get_weights(self) -> list[np.ndarray]:
        return [value.copy() for _, _, value in self.parameters()]

    def set_weights(self, weights: list[np.ndarray]) -> None:
        current = list(self.parameters())
        if len(weights) != len(current):
            raise ValueError(f'Expected {len(current)} weight arrays, got {len(weights)}')
        for (index, name, value), new in zip(current, weights):
            if value.shape != new.shape:
                raise ValueError(
                    f'Layer {index} {name}: expected shape {value.shape}, got {new.shape}'
                )
            value[...] = new

    def _batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            x = x[np.newaxis]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f'Network expects {self.input_shape} inputs, got {x.shape}')
        return x

    def forward(self, x, training: bool = False) -> np.ndarray:
        """Forward pass that keeps the caches ``backward`` needs."""
        out = self._batch(x)
        for layer in self.layers:
            out = layer.forward(out, training)
        self._probabilities = out
        return out

    def _infer(self, x: np.ndarray) -> np.ndarray:
        # Eval mode, writes nothing to the network or its layers
        out = x
        for layer in self.layers:
            out = layer.forward(out, training=False, cache=False)
        return out

    def backward(self, y) -> list[np.ndarray]:
        """
        Gradients of the mean binary cross-entropy of the last forward batch.

        The sigmoid and the loss are differentiated together, so the gradient at the
        logit is (p - y) / N.
        """
        if self._probabilities is None:
            raise RuntimeError('backward() called without a preceding forward()')
        p = self._probabilities
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape != p.shape:
            raise ValueError(f'{p.shape[0]} predictions but {y.shape[0]} labels')

        grad = ((p - y) / len(y))[:, np.newaxis]
        for layer in reversed(self.layers[:-1]):
            grad = layer.backward(grad)
        return self.gradients()

    def predict(self, x, threshold: float = 0.5, batch_size: int = 64) -> np.ndarray:
        """Eval-mode labels in batches; p >= threshold is abnormal."""
        return (self.predict_proba(x, batch_size) >= threshold).astype(np.int64)

    def predict_proba(self, x, batch_size: int = 64) -> np.ndarray:
        """Eval-mode P(abnormal) per image; safe to call from several threads."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            x = x[np.newaxis]
        if x.shape[0] == 0:
            return np.empty(0)
        x = self._batch(x)
        return np.concatenate(
            [
                self._infer(x[start : start + batch_size])
                for start in range(0, x.shape[0], batch_size)
            ]
        )

    def summary(self) -> str:
        rows = [('Layer', 'Output shape', 'Params')]
        rows.append(('Input', str(self.input_shape), ''))
        for layer, shape in zip(self.layers, self.shapes):
            rows.append((repr(layer), str(shape), str(layer.n_params)))
        widths = [max(len(row[i]) for row in rows) for i in range(3)]
        lines = [
            f'{name:<{widths[0]}}  {shape:<{widths[1]}}  {params:>{widths[2]}}'
            for name, shape, params in rows
        ]
        lines.append(f'Total params: {self.n_params}')
        return '\n'.join(lines)

    def __str__(self):
        return f'Network({len(self.layers)} layers, {self.n_params} params)'


def build_network(config: 'CnnConfig') -> Network:
    """
    The default architecture: per filter count, conv k x k + ReLU + 2x2 max pool; then
    flatten, dropout, dense + ReLU and a single sigmoid output.
    """
    layers: list[Layer] = []
    channels = config.channels
    side = config.image_size
    for filters in config.filters:
        layers += [
            Conv2d(channels, filters, config.kernel_size),
            ReLU(),
            MaxPool(config.pool_size),
        ]
        channels = filters
        side //= config.pool_size

    layers += [
        Flatten(),
        Dropout(config.dropout),
        Dense(side * side * channels, config.dense_units),
        ReLU(),
        Dense(config.dense_units, 1, init='glorot'),
        SigmoidOutput(),
    ]
    network = Network(layers, config.input_shape, seed=config.seed)
    logger.info(f'Built {network} for {config.input_shape} inputs')
    return network


def forward(network: Network, batch, training: bool = False) -> np.ndarray:
    return network.forward(batch, training)


def backward(network: Network, y) -> list[np.ndarray]:
    return network.backward(y)


def loss_bce(p, y) -> float:
    """Mean binary cross-entropy with p clamped to [1e-12, 1 - 1e-12]."""
    p = np.asarray(p, dtype=np.float64).ravel()
    p = np.clip(p, PROBABILITY_CLIP, 1 - PROBABILITY_CLIP)
    y = np.asarray(y, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise ValueError(f'{p.shape[0]} predictions but {y.shape[0]} labels')
    if p.size == 0:
        raise ValueError('Cannot compute the loss of an empty batch')
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    """|a - n| / max(|a|, |n|, floor)"""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    network: Network,
    x,
    y,
    eps: float = 1e-5,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare backprop against central finite differences and return the maximum
    relative error over the checked parameters.

    Runs in eval mode (dropout off). Every parameter entry is checked unless
    ``max_entries`` caps the number sampled per tensor.
    """
    if eps <= 0:
        raise ValueError(f'eps must be > 0, got {eps}')

    network.forward(x)
    analytic = [g.copy() for g in network.backward(y)]
    rng = np.random.default_rng(seed)

    worst = 0.0
    for (index, name, value), grad in zip(network.parameters(), analytic):
        flat = value.reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            entries = np.arange(flat.size)
        else:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        tensor_worst = 0.0
        for entry in entries:
            original = flat[entry]
            flat[entry] = original + eps
            plus = loss_bce(network.forward(x), y)
            flat[entry] = original - eps
            minus = loss_bce(network.forward(x), y)
            flat[entry] = original
            numeric = (plus - minus) / (2.0 * eps)
            tensor_worst = max(tensor_worst, relative_error(grad.flat[entry], numeric))

        logger.debug(
            f'Gradient check layer {index} {name}: max relative error {tensor_worst:.3e}'
        )
        worst = max(worst, tensor_worst)

    logger.info(f'Gradient check: max relative error {worst:.3e}')
    return float(worst)


def save_network(network: Network, path: Union[str, Path]) -> Path:
    """
    Write the binary weight container: magic, uint32 version, uint32 manifest length,
    the JSON manifest, then every parameter as little-endian float64 in manifest order.
    """
    manifest = {
        'input_shape': list(network.input_shape),
        'seed': network.seed,
        'layers': [
            {
                'type': layer.name,
                'config': layer.get_config(),
                'params': [
                    {'name': name, 'shape': list(value.shape)}
                    for name, value in layer.params.items()
                ],
            }
            for layer in network.layers
        ],
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode('utf-8')
    values = [value.ravel() for _, _, value in network.parameters()]
    payload = np.concatenate(values).astype('<f8') if values else np.empty(0, dtype='<f8')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('wb') as f:
        f.write(_HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, len(manifest_bytes)))
        f.write(manifest_bytes)
        f.write(payload.tobytes())
    logger.info(f'Saved network weights to {path}')
    return path


def load_network(path: Union[str, Path]) -> Network:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ConfigError(f'Cannot read weights file {path}: {e}') from e

    if len(data) < _HEADER.size:
        raise ConfigError(f'{path}: truncated header')
    magic, version, manifest_length = _HEADER.unpack_from(data)
    if magic != WEIGHTS_MAGIC:
        raise ConfigError(f'{path}: not a network weights file')
    if version != WEIGHTS_VERSION:
        raise ConfigError(f'{path}: unsupported weights version {version}')

    offset = _HEADER.size
    try:
        manifest = json.loads(data[offset : offset + manifest_length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f'{path}: corrupt manifest ({e})') from e
    raw = data[offset + manifest_length :]
    if len(raw) % 8:
        raise ConfigError(f'{path}: truncated parameter block')
    payload = np.frombuffer(raw, dtype='<f8')

    layers = []
    for spec in manifest['layers']:
        if spec['type'] not in LAYER_TYPES:
            raise ConfigError(f'{path}: unknown layer type {spec["type"]}')
        layers.append(LAYER_TYPES[spec['type']](**spec['config']))
    network = Network(layers, manifest['input_shape'], manifest['seed'], initialize=False)

    expected = sum(
        int(np.prod(p['shape'])) for spec in manifest['layers'] for p in spec['params']
    )
    if payload.size != expected:
        raise ConfigError(f'{path}: expected {expected} parameters, found {payload.size}')

    weights = []
    position = 0
    for spec in manifest['layers']:
        for param in spec['params']:
            size = int(np.prod(param['shape']))
            chunk = payload[position : position + size]
            weights.append(chunk.reshape(param['shape']).copy())
            position += size
    network.set_weights(weights)
    return network
