"""Convolutional and dense network definitions with analytic gradients.

Both network kinds share the same minimal protocol used by the training
loop: ``parameters()`` returns live parameter arrays, ``forward(x)``
returns class probabilities, and ``loss_and_grads(x, y, w)`` returns the
weighted cross-entropy loss plus gradients aligned with ``parameters()``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig, ShapeMismatch
from .ops import (
    conv2d_forward, conv2d_backward,
    maxpool2x2, maxpool2x2_backward,
    relu, relu_backward,
    softmax_cross_entropy, softmax,
)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass(frozen=True)
class ConvNetSpec:
    """Square grayscale CNN: stride-1 valid 2x2 convs, each followed by
    2x2 max pooling, then exactly two fully connected layers."""

    input_side: int = 32
    conv_filters: tuple[int, ...] = (8, 16)
    fc_widths: tuple[int, int] = (64, 7)

    def __post_init__(self):
        if self.input_side < 2:
            raise InvalidConfig("input_side must be >= 2")
        if len(self.conv_filters) < 1 or any(f < 1 for f in self.conv_filters):
            raise InvalidConfig("conv_filters must be positive counts")
        if len(self.fc_widths) != 2 or any(w < 1 for w in self.fc_widths):
            raise InvalidConfig("exactly two positive fully connected widths required")
        side = self.input_side
        for _ in self.conv_filters:
            if side < 2:
                raise InvalidConfig("spatial dims vanish before the last conv layer")
            side = (side - 1) // 2
            if side < 1:
                raise InvalidConfig("spatial dims vanish after pooling")

    @classmethod
    def reference(cls, classes: int) -> "ConvNetSpec":
        """Full-scale 226x226 preset; desk-scale work uses the 32x32 default."""
        return cls(input_side=226, conv_filters=(8, 16), fc_widths=(64, classes))

    @property
    def feature_side(self) -> int:
        side = self.input_side
        for _ in self.conv_filters:
            side = (side - 1) // 2
        return side

    @property
    def deep_feature_len(self) -> int:
        return self.conv_filters[-1] * self.feature_side ** 2


class ConvNet:
    """A trainable CNN; its flattened last pool activation doubles as the
    deep-feature representation once the FC head is bypassed."""

    def __init__(self, spec: ConvNetSpec, seed: int):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.conv_filters: list[np.ndarray] = []
        self.conv_biases: list[np.ndarray] = []
        channels = 1
        for count in spec.conv_filters:
            fan_in, fan_out = channels * 4, count * 4
            self.conv_filters.append(_glorot(rng, (count, channels, 2, 2), fan_in, fan_out))
            self.conv_biases.append(np.zeros(count))
            channels = count
        flat = spec.deep_feature_len
        h, out = spec.fc_widths
        self.fc1_w = _glorot(rng, (flat, h), flat, h)
        self.fc1_b = np.zeros(h)
        self.fc2_w = _glorot(rng, (h, out), h, out)
        self.fc2_b = np.zeros(out)

    @property
    def output_dim(self) -> int:
        return self.fc2_w.shape[1]

    def parameters(self) -> list[np.ndarray]:
        params = []
        for f, b in zip(self.conv_filters, self.conv_biases):
            params.extend([f, b])
        params.extend([self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b])
        return params

    def load_parameters(self, arrays: list[np.ndarray]) -> None:
        current = self.parameters()
        if len(arrays) != len(current):
            raise ShapeMismatch(f"expected {len(current)} parameter arrays, got {len(arrays)}")
        for p, a in zip(current, arrays):
            if p.shape != a.shape:
                raise ShapeMismatch(f"parameter shape {p.shape} != stored {a.shape}")
            p[...] = a

    def _as_chw(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 2:
            x = x[None, :, :]
        if x.shape != (1, self.spec.input_side, self.spec.input_side):
            raise ShapeMismatch(
                f"image shape {image.shape} != ({self.spec.input_side}, {self.spec.input_side})")
        return x

    def _conv_stack(self, x: np.ndarray):
        """Runs conv/relu/pool stages; returns per-stage caches and the
        flattened deep feature vector."""
        caches = []
        for f, b in zip(self.conv_filters, self.conv_biases):
            z = conv2d_forward(x, f, b)
            a = relu(z)
            p = maxpool2x2(a)
            caches.append((x, z, a))
            x = p
        return caches, x.reshape(-1)

    def deep_features(self, image: np.ndarray) -> np.ndarray:
        _, flat = self._conv_stack(self._as_chw(image))
        return flat

    def logits(self, image: np.ndarray) -> np.ndarray:
        _, flat = self._conv_stack(self._as_chw(image))
        h = relu(flat @ self.fc1_w + self.fc1_b)
        return h @ self.fc2_w + self.fc2_b

    def forward(self, image: np.ndarray) -> np.ndarray:
        return softmax(self.logits(image))

    def loss_and_grads(self, image: np.ndarray, true_class: int, sample_weight: float = 1.0):
        x = self._as_chw(image)
        caches, flat = self._conv_stack(x)
        z1 = flat @ self.fc1_w + self.fc1_b
        h = relu(z1)
        logits = h @ self.fc2_w + self.fc2_b
        _, loss, d_logits = softmax_cross_entropy(logits, true_class, sample_weight)

        d_fc2_w = np.outer(h, d_logits)
        d_fc2_b = d_logits
        d_h = d_logits @ self.fc2_w.T
        d_z1 = relu_backward(z1, d_h)
        d_fc1_w = np.outer(flat, d_z1)
        d_fc1_b = d_z1
        d_flat = d_z1 @ self.fc1_w.T

        shape = (self.spec.conv_filters[-1], self.spec.feature_side, self.spec.feature_side)
        d_p = d_flat.reshape(shape)
        conv_grads = []
        for (x_in, z, a), f in zip(reversed(caches), reversed(self.conv_filters)):
            d_a = maxpool2x2_backward(a, d_p)
            d_z = relu_backward(z, d_a)
            d_p, d_f, d_b = conv2d_backward(x_in, f, d_z)
            conv_grads.append((d_f, d_b))
        conv_grads.reverse()

        grads = []
        for d_f, d_b in conv_grads:
            grads.extend([d_f, d_b])
        grads.extend([d_fc1_w, d_fc1_b, d_fc2_w, d_fc2_b])
        return loss, grads


@dataclass(frozen=True)
class MlpSpec:
    """Three weight layers: input -> hidden1 -> hidden2 -> output, with
    ReLU in the hidden layers and softmax on the output."""

    input_dim: int
    hidden1: int
    hidden2: int
    output_dim: int

    def __post_init__(self):
        for name in ("input_dim", "hidden1", "hidden2", "output_dim"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")


class Mlp:
    """The 3-layer classifier head used for both modalities."""

    def __init__(self, spec: MlpSpec, seed: int):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.w1 = _glorot(rng, (spec.input_dim, spec.hidden1), spec.input_dim, spec.hidden1)
        self.b1 = np.zeros(spec.hidden1)
        self.w2 = _glorot(rng, (spec.hidden1, spec.hidden2), spec.hidden1, spec.hidden2)
        self.b2 = np.zeros(spec.hidden2)
        self.w3 = _glorot(rng, (spec.hidden2, spec.output_dim), spec.hidden2, spec.output_dim)
        self.b3 = np.zeros(spec.output_dim)

    @property
    def output_dim(self) -> int:
        return self.w3.shape[1]

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def load_parameters(self, arrays: list[np.ndarray]) -> None:
        if len(arrays) != 6:
            raise ShapeMismatch(f"expected 6 parameter arrays, got {len(arrays)}")
        for p, a in zip(self.parameters(), arrays):
            if p.shape != a.shape:
                raise ShapeMismatch(f"parameter shape {p.shape} != stored {a.shape}")
            p[...] = a

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.spec.input_dim,):
            raise ShapeMismatch(f"input length {x.shape} != ({self.spec.input_dim},)")
        return x

    def _output_layer(self, h2: np.ndarray) -> np.ndarray:
        # per-column reduction keeps existing logits bit-identical when
        # add_output_unit widens the layer (BLAS matmul would reassociate)
        return np.einsum("i,ij->j", h2, self.w3) + self.b3

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = self._check_input(x)
        h1 = relu(x @ self.w1 + self.b1)
        h2 = relu(h1 @ self.w2 + self.b2)
        return self._output_layer(h2)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.logits(x))

    def loss_and_grads(self, x: np.ndarray, true_class: int, sample_weight: float = 1.0):
        x = self._check_input(x)
        z1 = x @ self.w1 + self.b1
        h1 = relu(z1)
        z2 = h1 @ self.w2 + self.b2
        h2 = relu(z2)
        logits = self._output_layer(h2)
        _, loss, d_logits = softmax_cross_entropy(logits, true_class, sample_weight)

        d_w3 = np.outer(h2, d_logits)
        d_b3 = d_logits
        d_h2 = d_logits @ self.w3.T
        d_z2 = relu_backward(z2, d_h2)
        d_w2 = np.outer(h1, d_z2)
        d_b2 = d_z2
        d_h1 = d_z2 @ self.w2.T
        d_z1 = relu_backward(z1, d_h1)
        d_w1 = np.outer(x, d_z1)
        d_b1 = d_z1
        return loss, [d_w1, d_b1, d_w2, d_b2, d_w3, d_b3]

    def add_output_unit(self) -> int:
        """Grow the output layer by one zero-initialized unit; existing
        parameters are untouched. Returns the new unit's index."""
        self.w3 = np.concatenate([self.w3, np.zeros((self.w3.shape[0], 1))], axis=1)
        self.b3 = np.concatenate([self.b3, np.zeros(1)])
        self.spec = MlpSpec(self.spec.input_dim, self.spec.hidden1,
                            self.spec.hidden2, self.spec.output_dim + 1)
        return self.w3.shape[1] - 1


def forward_deep_features(network: ConvNet, image: np.ndarray) -> np.ndarray:
    """Flattened activation after the final conv+pool stage; the FC head
    exists for pretraining and is bypassed here."""
    return network.deep_features(image)


def backward(network, x: np.ndarray, true_class: int, sample_weight: float = 1.0):
    """Exact gradients of the weighted cross-entropy for every parameter."""
    _, grads = network.loss_and_grads(x, true_class, sample_weight)
    return grads
