"""Nesterov momentum, gradient clipping and plateau learning-rate annealing."""
from __future__ import annotations

import math

import numpy as np

from plnmt.errors import DimensionError
from plnmt.numcore.params import ParamStore


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float):
    """Rescale ``grads`` so their joint L2 norm is at most ``max_norm``.

    Returns ``(clipped, norm_before)``.
    """
    norm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm is None or max_norm <= 0 or norm <= max_norm:
        return grads, norm
    factor = max_norm / (norm + 1e-12)
    return {k: g * factor for k, g in grads.items()}, norm


class NAG:
    """Nesterov accelerated gradient in the look-ahead formulation.

    The stored parameters are ``theta``; gradients must be evaluated at
    ``theta + momentum * v`` (see :meth:`lookahead`).  One update is
    ``v <- momentum * v - lr * g`` followed by ``theta <- theta + v``.
    """

    def __init__(self, params: ParamStore, lr: float = 0.25, momentum: float = 0.9,
                 clip_norm: float | None = 5.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.velocity = {k: np.zeros_like(v) for k, v in params.items()}

    def lookahead(self) -> ParamStore:
        if self.momentum == 0:
            return self.params
        return ParamStore.from_arrays(
            {name: theta + self.momentum * self.velocity[name] for name, theta in self.params.items()},
            seed=self.params.seed, dtype=self.params.dtype)

    def step(self, grads: dict[str, np.ndarray]) -> float:
        """Apply one update in place; returns the pre-clipping gradient norm."""
        if self.clip_norm:
            grads, norm = clip_global_norm(grads, self.clip_norm)
        else:
            norm = float("nan")
        nag_update(self.params, grads, self.lr, self.momentum, self.velocity)
        return norm


def nag_update(params: ParamStore, grads: dict[str, np.ndarray], lr: float,
               momentum: float, velocity: dict[str, np.ndarray]) -> ParamStore:
    """In-place NAG step on ``params`` given look-ahead gradients ``grads``."""
    for name, g in grads.items():
        theta = params[name]
        if g.shape != theta.shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, param {theta.shape}")
        v = velocity[name]
        v *= momentum
        v -= lr * g.astype(theta.dtype)
        theta += v
    return params


class PlateauAnnealer:
    """Divide the learning rate by ``factor`` after ``patience`` steps without a new best loss.

    The schedule depends only on the sequence of losses fed to :meth:`step`,
    so replaying a loss history reproduces the learning rates.
    """

    def __init__(self, lr: float, factor: float = 10.0, patience: int = 20000):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.best = float("inf")
        self.stale = 0

    def step(self, loss: float) -> float:
        if loss < self.best:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr /= self.factor
                self.stale = 0
        return self.lr
