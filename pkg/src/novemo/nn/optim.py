"""Momentum, Nesterov, and Adam parameter updates."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidHyperparameter, ShapeMismatch

KINDS = ("momentum", "nesterov", "adam")


def default_learning_rate(kind: str) -> float:
    return 0.001 if kind == "adam" else 0.01


@dataclass
class OptimizerState:
    """Per-parameter accumulators plus hyperparameters for one optimizer."""

    kind: str
    learning_rate: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    velocity: list[np.ndarray] = field(default_factory=list)
    moment1: list[np.ndarray] = field(default_factory=list)
    moment2: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidHyperparameter(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise InvalidHyperparameter("learning_rate must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidHyperparameter("momentum coefficient must be in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidHyperparameter("adam betas must be in [0, 1)")
        if self.eps <= 0:
            raise InvalidHyperparameter("adam eps must be > 0")

    @classmethod
    def for_params(cls, kind: str, params: list[np.ndarray], learning_rate: float | None = None,
                   **kwargs) -> "OptimizerState":
        if learning_rate is None:
            learning_rate = default_learning_rate(kind)
        state = cls(kind=kind, learning_rate=learning_rate, **kwargs)
        zeros = lambda: [np.zeros_like(p) for p in params]
        if kind in ("momentum", "nesterov"):
            state.velocity = zeros()
        else:
            state.moment1 = zeros()
            state.moment2 = zeros()
        return state


def optimizer_step(state: OptimizerState, params: list[np.ndarray],
                   grads: list[np.ndarray]):
    """Update params in place per the state's rule; returns (params, state)."""
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"param shape {p.shape} != grad shape {g.shape}")

    lr, mu = state.learning_rate, state.momentum
    if state.kind == "momentum":
        for p, g, v in zip(params, grads, state.velocity):
            v *= mu
            v -= lr * g
            p += v
    elif state.kind == "nesterov":
        # lookahead form evaluated with the gradient at the stored params
        for i, (p, g) in enumerate(zip(params, grads)):
            v_prev = state.velocity[i]
            v_new = mu * v_prev - lr * g
            p += -mu * v_prev + (1.0 + mu) * v_new
            state.velocity[i] = v_new
    else:
        state.step += 1
        t = state.step
        b1, b2 = state.beta1, state.beta2
        for p, g, m, v in zip(params, grads, state.moment1, state.moment2):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * np.square(g)
            m_hat = m / (1.0 - b1 ** t)
            v_hat = v / (1.0 - b2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
