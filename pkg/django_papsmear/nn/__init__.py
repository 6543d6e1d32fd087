"""
A small channels-last CNN on numpy: layers with hand-written backward passes, Adam,
a finite-difference gradient check and a binary weight container.
"""

from .layers import (
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool,
    ReLU,
    SigmoidOutput,
    conv2d_forward,
    dropout,
    maxpool_forward,
)
from .network import (
    Network,
    backward,
    build_network,
    forward,
    grad_check,
    load_network,
    loss_bce,
    save_network,
)
from .training import (
    Adam,
    CnnConfig,
    TrainHistory,
    evaluate_network,
    predict_labels,
    train,
)

__all__ = [
    'Adam',
    'CnnConfig',
    'Conv2d',
    'Dense',
    'Dropout',
    'Flatten',
    'Layer',
    'MaxPool',
    'Network',
    'ReLU',
    'SigmoidOutput',
    'TrainHistory',
    'backward',
    'build_network',
    'conv2d_forward',
    'dropout',
    'evaluate_network',
    'forward',
    'grad_check',
    'load_network',
    'loss_bce',
    'maxpool_forward',
    'predict_labels',
    'save_network',
    'train',
]
