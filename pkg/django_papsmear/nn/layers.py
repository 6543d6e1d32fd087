"""
Layers of the channels-last CNN.

Every tensor is float64 with the batch on axis 0 and channels last: images are
(N, H, W, C), flattened activations (N, F). Shapes passed to ``output_shape`` and
``initialize`` exclude the batch axis.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Optional

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[np.newaxis], True
    if x.ndim != 4:
        raise ValueError(f'Expected (H, W, C) or (N, H, W, C) input, got shape {x.shape}')
    return x, False


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))


def _check_kernels(kernels, in_channels: int) -> np.ndarray:
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise ValueError(
            f'Kernels must have shape (k, k, Cin, Cout), got {kernels.shape}'
        )
    if kernels.shape[0] % 2 == 0:
        raise ValueError(f'Same padding needs an odd kernel size, got {kernels.shape[0]}')
    if kernels.shape[2] != in_channels:
        raise ValueError(
            f'Input has {in_channels} channels but kernels expect {kernels.shape[2]}'
        )
    return kernels


def conv2d_forward(x, kernels, bias=None) -> np.ndarray:
    """
    Stride-1 convolution with zero "same" padding.

    out[y, x, co] = bias[co] + sum over (dy, dx, ci) of
                    padded[y + dy, x + dx, ci] * kernels[dy, dx, ci, co]

    where the input is padded by k // 2 on every border.
    Accepts a single (H, W, Cin) image or an (N, H, W, Cin) batch.
    """
    batch, single = _as_batch(x)
    kernels = _check_kernels(kernels, batch.shape[-1])
    k = kernels.shape[0]
    n, h, w, _ = batch.shape

    padded = _pad(batch, k // 2)
    out = np.zeros((n, h, w, kernels.shape[3]))
    for dy in range(k):
        for dx in range(k):
            out += padded[:, dy : dy + h, dx : dx + w, :] @ kernels[dy, dx]
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)
    return out[0] if single else out


def conv2d_backward(
    dout: np.ndarray, x: np.ndarray, kernels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dkernels, dbias) of ``conv2d_forward`` for a batch."""
    k = kernels.shape[0]
    n, h, w, _ = x.shape
    padding = k // 2

    padded = _pad(x, padding)
    dpadded = np.zeros_like(padded)
    dkernels = np.empty_like(kernels)
    for dy in range(k):
        for dx in range(k):
            window = padded[:, dy : dy + h, dx : dx + w, :]
            dkernels[dy, dx] = np.tensordot(window, dout, axes=([0, 1, 2], [0, 1, 2]))
            dpadded[:, dy : dy + h, dx : dx + w, :] += dout @ kernels[dy, dx].T

    dbias = dout.sum(axis=(0, 1, 2))
    return dpadded[:, padding : padding + h, padding : padding + w, :], dkernels, dbias


def maxpool_forward(x, size: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """
    Non-overlapping size x size max pooling.

    Returns the pooled tensor and the argmax of every window (index into the
    flattened window, first maximum on ties), which ``maxpool_backward`` routes
    gradients through. Odd trailing rows and columns are dropped.
    """
    if size < 1:
        raise ValueError(f'Pool size must be >= 1, got {size}')
    batch, single = _as_batch(x)
    n, h, w, c = batch.shape
    ho, wo = h // size, w // size
    if ho == 0 or wo == 0:
        raise ValueError(f'Input {h}x{w} is smaller than the {size}x{size} pool')

    windows = (
        batch[:, : ho * size, : wo * size, :]
        .reshape(n, ho, size, wo, size, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, ho, wo, c, size * size)
    )
    argmax = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, argmax[..., np.newaxis], axis=-1)[..., 0]
    if single:
        return out[0], argmax[0]
    return out, argmax


def maxpool_backward(
    dout: np.ndarray, argmax: np.ndarray, input_shape: tuple[int, ...], size: int = 2
) -> np.ndarray:
    n, ho, wo, c = dout.shape
    grad_windows = np.zeros((n, ho, wo, c, size * size))
    np.put_along_axis(
        grad_windows, argmax[..., np.newaxis], dout[..., np.newaxis], axis=-1
    )
    grad = (
        grad_windows.reshape(n, ho, wo, c, size, size)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(n, ho * size, wo * size, c)
    )
    dx = np.zeros(input_shape)
    dx[:, : ho * size, : wo * size, :] = grad
    return dx


def dropout(
    x,
    rate: float,
    training: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Inverted dropout: in training, zero each unit with probability ``rate`` and scale
    the survivors by 1 / (1 - rate). Evaluation (or rate 0) is the identity.

    Returns the output and the scaling mask (None when nothing was dropped).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f'Dropout rate must be in [0, 1), got {rate}')
    x = np.asarray(x, dtype=np.float64)
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        rng = np.random.default_rng()
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def he_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int
) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def glorot_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer(ABC):
    """
    Base class for layers.

    ``params`` and ``grads`` map parameter names to arrays of the same shape, in a
    fixed order that the weight container relies on. ``backward`` must follow a
    ``forward(..., cache=True)`` on the same batch: it uses what that pass cached.
    Passes with ``cache=False`` leave the layer untouched, so inference on a
    fitted layer can run from several threads at once.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    @property
    def name(self) -> str:
        return self.__class__.__name__

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        return input_shape

    def initialize(self, input_shape: tuple[int, ...], rng: np.random.Generator) -> None:
        """Draw initial parameters; parameter-free layers do nothing."""

    def get_config(self) -> dict[str, Any]:
        """Constructor arguments, as stored in the weight container manifest."""
        return {}

    @abstractmethod
    def forward(
        self, x: np.ndarray, training: bool = False, cache: bool = True
    ) -> np.ndarray: ...

    @abstractmethod
    def backward(self, dout: np.ndarray) -> np.ndarray: ...

    def _cached(self, value):
        if value is None:
            raise RuntimeError(f'{self.name}.backward() called before forward()')
        return value

    def __repr__(self):
        args = ', '.join(f'{k}={v!r}' for k, v in self.get_config().items())
        return f'{self.name}({args})'


class Conv2d(Layer):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3):
        super().__init__()
        if in_channels < 1 or out_channels < 1:
            raise ValueError('Channel counts must be >= 1')
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ValueError(f'kernel_size must be positive and odd, got {kernel_size}')
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.params = {
            'W': np.zeros((kernel_size, kernel_size, in_channels, out_channels)),
            'b': np.zeros(out_channels),
        }
        self._input: Optional[np.ndarray] = None

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[2] != self.in_channels:
            raise ValueError(
                f'{self!r} expects (H, W, {self.in_channels}) input, got {input_shape}'
            )
        return (input_shape[0], input_shape[1], self.out_channels)

    def initialize(self, input_shape, rng):
        fan_in = self.kernel_size * self.kernel_size * self.in_channels
        self.params['W'] = he_uniform(rng, self.params['W'].shape, fan_in)
        self.params['b'] = np.zeros(self.out_channels)

    def get_config(self):
        return {
            'in_channels': self.in_channels,
            'out_channels': self.out_channels,
            'kernel_size': self.kernel_size,
        }

    def forward(self, x, training=False, cache=True):
        if cache:
            self._input = x
        return conv2d_forward(x, self.params['W'], self.params['b'])

    def backward(self, dout):
        dx, dW, db = conv2d_backward(dout, self._cached(self._input), self.params['W'])
        self.grads = {'W': dW, 'b': db}
        return dx


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._active: Optional[np.ndarray] = None

    def forward(self, x, training=False, cache=True):
        active = x > 0
        if cache:
            self._active = active
        return np.where(active, x, 0.0)

    def backward(self, dout):
        return np.where(self._cached(self._active), dout, 0.0)


class MaxPool(Layer):
    def __init__(self, size: int = 2):
        super().__init__()
        if size < 1:
            raise ValueError(f'Pool size must be >= 1, got {size}')
        self.size = size
        self._argmax: Optional[np.ndarray] = None
        self._input_shape: Optional[tuple[int, ...]] = None

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if h < self.size or w < self.size:
            raise ValueError(
                f'{h}x{w} input is smaller than the {self.size}x{self.size} pool'
            )
        return (h // self.size, w // self.size, c)

    def get_config(self):
        return {'size': self.size}

    def forward(self, x, training=False, cache=True):
        out, argmax = maxpool_forward(x, self.size)
        if cache:
            self._input_shape = x.shape
            self._argmax = argmax
        return out

    def backward(self, dout):
        return maxpool_backward(
            dout, self._cached(self._argmax), self._cached(self._input_shape), self.size
        )


class Dropout(Layer):
    def __init__(self, rate: float = 0.4):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f'Dropout rate must be in [0, 1), got {rate}')
        self.rate = rate
        self.rng: Optional[np.random.Generator] = None
        self._mask: Optional[np.ndarray] = None
        self._forwarded = False

    def get_config(self):
        return {'rate': self.rate}

    def forward(self, x, training=False, cache=True):
        out, mask = dropout(x, self.rate, training, self.rng)
        if cache:
            self._mask = mask
            self._forwarded = True
        return out

    def backward(self, dout):
        if not self._forwarded:
            raise RuntimeError('Dropout.backward() called before forward()')
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    def __init__(self):
        super().__init__()
        self._input_shape: Optional[tuple[int, ...]] = None

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False, cache=True):
        if cache:
            self._input_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cached(self._input_shape))


class Dense(Layer):
    INITS = ('he', 'glorot')

    def __init__(self, in_features: int, out_features: int, init: str = 'he'):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise ValueError('Feature counts must be >= 1')
        if init not in self.INITS:
            raise ValueError(f'init must be one of {self.INITS}, got {init!r}')
        self.in_features = in_features
        self.out_features = out_features
        self.init = init
        self.params = {
            'W': np.zeros((in_features, out_features)),
            'b': np.zeros(out_features),
        }
        self._input: Optional[np.ndarray] = None

    def output_shape(self, input_shape):
        if input_shape != (self.in_features,):
            raise ValueError(
                f'{self!r} expects ({self.in_features},) input, got {input_shape}'
            )
        return (self.out_features,)

    def initialize(self, input_shape, rng):
        shape = self.params['W'].shape
        if self.init == 'he':
            self.params['W'] = he_uniform(rng, shape, self.in_features)
        else:
            self.params['W'] = glorot_uniform(
                rng, shape, self.in_features, self.out_features
            )
        self.params['b'] = np.zeros(self.out_features)

    def get_config(self):
        return {
            'in_features': self.in_features,
            'out_features': self.out_features,
            'init': self.init,
        }

    def forward(self, x, training=False, cache=True):
        if cache:
            self._input = x
        return x @ self.params['W'] + self.params['b']

    def backward(self, dout):
        x = self._cached(self._input)
        self.grads = {'W': x.T @ dout, 'b': dout.sum(axis=0)}
        return dout @ self.params['W'].T


class SigmoidOutput(Layer):
    """Maps the (N, 1) logit column to (N,) probabilities of abnormal."""

    def __init__(self):
        super().__init__()
        self._probabilities: Optional[np.ndarray] = None

    def output_shape(self, input_shape):
        if input_shape != (1,):
            raise ValueError(f'SigmoidOutput expects a single logit, got {input_shape}')
        return ()

    def forward(self, x, training=False, cache=True):
        p = expit(x[:, 0])
        if cache:
            self._probabilities = p
        return p

    def backward(self, dout):
        p = self._cached(self._probabilities)
        return (dout * p * (1.0 - p))[:, np.newaxis]


LAYER_TYPES: dict[str, type[Layer]] = {
    cls.__name__: cls
    for cls in (Conv2d, ReLU, MaxPool, Dropout, Flatten, Dense, SigmoidOutput)
}
