"""Mini-batch gradient descent over weighted samples.

The batch gradient is the weight-normalized sum of per-sample gradients
(sum of w_i * grad_i divided by sum of w_i), so zero-weight samples have
exactly no effect and short final batches are averaged over the samples
they actually contain. Everything is deterministic given the seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyDataset, InvalidConfig
from .optim import OptimizerState, optimizer_step, default_learning_rate


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for one training run."""

    epochs: int
    mini_batch_size: int = 32
    optimizer: str = "momentum"
    learning_rate: float | None = None
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidConfig("epochs must be >= 0")
        if self.mini_batch_size < 1:
            raise InvalidConfig("mini_batch_size must be >= 1")

    def resolved_learning_rate(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return default_learning_rate(self.optimizer)


def train_epochs(network, dataset, config: TrainingConfig,
                 state: OptimizerState | None = None) -> list[float]:
    """Train in place; returns the per-epoch mean weighted loss trace.

    ``dataset`` is a sequence of (input, true_class, weight) triples. Pass
    ``state`` to continue with warm optimizer accumulators.
    """
    n = len(dataset)
    if n == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if config.mini_batch_size > n:
        raise InvalidConfig(f"mini_batch_size {config.mini_batch_size} exceeds dataset size {n}")
    out_dim = network.output_dim
    for _, label, weight in dataset:
        if not 0 <= label < out_dim:
            raise InvalidConfig(f"label {label} outside class count {out_dim}")
        if weight < 0:
            raise InvalidConfig("sample weights must be >= 0")

    params = network.parameters()
    if state is None:
        state = OptimizerState.for_params(
            config.optimizer, params,
            learning_rate=config.resolved_learning_rate(),
            momentum=config.momentum, beta1=config.beta1,
            beta2=config.beta2, eps=config.eps_adam)

    rng = np.random.default_rng(config.rng_seed)
    batch = config.mini_batch_size
    trace = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch):
            # canonical within-batch order: shuffling decides membership
            # only, so gradient accumulation order is reproducible
            idx = np.sort(order[start:start + batch])
            acc = [np.zeros_like(p) for p in params]
            weight_sum = 0.0
            for i in idx:
                x, y, w = dataset[i]
                loss, grads = network.loss_and_grads(x, y, w)
                epoch_loss += loss
                weight_sum += w
                for a, g in zip(acc, grads):
                    a += g
            if weight_sum > 0.0:
                for a in acc:
                    a /= weight_sum
                params, state = optimizer_step(state, params, acc)
        trace.append(epoch_loss / n)
    return trace
