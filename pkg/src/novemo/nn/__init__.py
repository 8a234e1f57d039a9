"""From-scratch neural network core: layer ops, networks, optimizers, training."""

from .ops import (
    conv2d_forward,
    conv2d_backward,
    maxpool2x2,
    maxpool2x2_backward,
    relu,
    relu_backward,
    softmax,
    log_softmax,
    cross_entropy,
    softmax_cross_entropy,
)
from .networks import ConvNetSpec, MlpSpec, ConvNet, Mlp, forward_deep_features, backward
from .optim import OptimizerState, optimizer_step, default_learning_rate
from .train import TrainingConfig, train_epochs

__all__ = [
    "conv2d_forward", "conv2d_backward", "maxpool2x2", "maxpool2x2_backward",
    "relu", "relu_backward", "softmax", "log_softmax", "cross_entropy",
    "softmax_cross_entropy",
    "ConvNetSpec", "MlpSpec", "ConvNet", "Mlp", "forward_deep_features", "backward",
    "OptimizerState", "optimizer_step", "default_learning_rate",
    "TrainingConfig", "train_epochs",
]
