"""Layer-level tensor operations with exact analytic backward passes.

Tensors are plain float64 numpy arrays. Convolution is the valid
(no-padding) stride-1 cross-correlation with a fixed 2x2 filter size;
pooling is 2x2 max with any odd trailing row/column dropped.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch

FILTER_SIDE = 2


def _check_conv_shapes(x: np.ndarray, filters: np.ndarray, bias: np.ndarray):
    if x.ndim != 3:
        raise ShapeMismatch(f"conv input must be [C,H,W], got shape {x.shape}")
    if filters.ndim != 4 or filters.shape[2:] != (FILTER_SIDE, FILTER_SIDE):
        raise ShapeMismatch(f"filters must be [F,C,{FILTER_SIDE},{FILTER_SIDE}], got {filters.shape}")
    if filters.shape[1] != x.shape[0]:
        raise ShapeMismatch(
            f"filter channels {filters.shape[1]} != input channels {x.shape[0]}")
    if bias.shape != (filters.shape[0],):
        raise ShapeMismatch(f"bias must be [F]={filters.shape[0]}, got {bias.shape}")
    if x.shape[1] < FILTER_SIDE or x.shape[2] < FILTER_SIDE:
        raise ShapeMismatch(f"spatial dims {x.shape[1:]} too small for {FILTER_SIDE}x{FILTER_SIDE} filter")


def conv2d_forward(x: np.ndarray, filters: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Valid stride-1 cross-correlation: [C,H,W] -> [F,H-1,W-1].

    Accumulates bias first, then filter taps in (channel, row, col) order,
    matching a naive loop bit for bit.
    """
    x = np.asarray(x, dtype=np.float64)
    filters = np.asarray(filters, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    _check_conv_shapes(x, filters, bias)
    c, h, w = x.shape
    hp, wp = h - 1, w - 1
    out = np.empty((filters.shape[0], hp, wp))
    out[:] = bias[:, None, None]
    for ch in range(c):
        for i in range(FILTER_SIDE):
            for j in range(FILTER_SIDE):
                out += filters[:, ch, i, j][:, None, None] * x[ch, i:i + hp, j:j + wp]
    return out


def conv2d_backward(x: np.ndarray, filters: np.ndarray, d_out: np.ndarray):
    """Gradients of a scalar loss w.r.t. conv input, filters, and bias.

    Returns (d_x, d_filters, d_bias) for upstream gradient d_out of
    shape [F,H-1,W-1].
    """
    c, h, w = x.shape
    hp, wp = h - 1, w - 1
    if d_out.shape != (filters.shape[0], hp, wp):
        raise ShapeMismatch(f"d_out shape {d_out.shape} != {(filters.shape[0], hp, wp)}")
    windows = sliding_window_view(x, (FILTER_SIDE, FILTER_SIDE), axis=(1, 2))
    d_bias = d_out.sum(axis=(1, 2))
    d_filters = np.einsum("fhw,chwij->fcij", d_out, windows, optimize=True)
    d_x = np.zeros_like(x)
    for i in range(FILTER_SIDE):
        for j in range(FILTER_SIDE):
            d_x[:, i:i + hp, j:j + wp] += np.einsum(
                "fhw,fc->chw", d_out, filters[:, :, i, j], optimize=True)
    return d_x, d_filters, d_bias


def _pool_blocks(x: np.ndarray):
    c, h, w = x.shape
    hp, wp = h // 2, w // 2
    trimmed = x[:, :2 * hp, :2 * wp]
    return trimmed.reshape(c, hp, 2, wp, 2).transpose(0, 1, 3, 2, 4).reshape(c, hp, wp, 4)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling: [C,H,W] -> [C,H//2,W//2], odd edges dropped."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"pool input must be [C,H,W], got shape {x.shape}")
    if x.shape[1] < 2 or x.shape[2] < 2:
        raise ShapeMismatch(f"spatial dims {x.shape[1:]} too small for 2x2 pooling")
    return _pool_blocks(x).max(axis=3)


def maxpool2x2_backward(x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    """Route d_out to each block's argmax (first-occurrence tie-break)."""
    c, h, w = x.shape
    hp, wp = h // 2, w // 2
    if d_out.shape != (c, hp, wp):
        raise ShapeMismatch(f"d_out shape {d_out.shape} != {(c, hp, wp)}")
    blocks = _pool_blocks(x)
    idx = blocks.argmax(axis=3)
    d_blocks = np.zeros_like(blocks)
    np.put_along_axis(d_blocks, idx[..., None], d_out[..., None], axis=3)
    d_trimmed = d_blocks.reshape(c, hp, wp, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, 2 * hp, 2 * wp)
    d_x = np.zeros_like(x)
    d_x[:, :2 * hp, :2 * wp] = d_trimmed
    return d_x


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x: np.ndarray, d_out: np.ndarray) -> np.ndarray:
    return d_out * (x > 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis; entries sum to 1."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(probs: np.ndarray, true_class: int, sample_weight: float = 1.0) -> float:
    """Weighted negative log-likelihood of the true class."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= true_class < probs.shape[-1]:
        raise ShapeMismatch(f"class {true_class} outside probability vector of length {probs.shape[-1]}")
    if sample_weight < 0:
        raise ValueError("sample_weight must be >= 0")
    return float(-sample_weight * np.log(probs[true_class]))


def softmax_cross_entropy(logits: np.ndarray, true_class: int, sample_weight: float = 1.0):
    """Fused log-sum-exp path: returns (probs, loss, d_logits).

    d_logits = sample_weight * (probs - onehot), the exact gradient of the
    weighted cross-entropy with respect to the logits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= true_class < logits.shape[-1]:
        raise ShapeMismatch(f"class {true_class} outside logit vector of length {logits.shape[-1]}")
    logp = log_softmax(logits)
    probs = np.exp(logp)
    loss = float(-sample_weight * logp[true_class])
    d_logits = sample_weight * probs
    d_logits[true_class] -= sample_weight
    return probs, loss, d_logits
