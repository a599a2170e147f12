"""
AdamW with decoupled weight decay, a reduce-on-plateau learning-rate
scheduler and an early-stopping monitor
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.autodiff.tensor import Tensor
from src.exceptions import DimensionError, NumericError, ParameterError

logger = logging.getLogger(__name__)


@dataclass
class OptimState:
    """First/second moment buffers and hyperparameters of an AdamW run"""

    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(
        cls, params: Sequence[np.ndarray], lr: float, **kwargs
    ) -> "OptimState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )


def adamw_step(
    params: Sequence[np.ndarray],
    grads: Sequence[Optional[np.ndarray]],
    state: OptimState,
) -> Sequence[np.ndarray]:
    """
    Apply one AdamW update in place.

    Decay is applied first (theta -= lr * wd * theta), then the bias-corrected
    adaptive step. Parameters whose gradient is None are left untouched.

    Raises:
        NumericError: Some gradient is non-finite; nothing is modified.
    """
    if state.lr <= 0:
        raise ParameterError(f"Learning rate must be positive, got {state.lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and optimizer buffers differ in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.shape:
            raise DimensionError(f"Gradient {i} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"Non-finite gradient for parameter {i}; step aborted")

    state.step += 1
    beta1, beta2 = state.betas
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        p *= 1.0 - state.lr * state.weight_decay
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params


class AdamW:
    """AdamW bound to a fixed list of parameter tensors"""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.state = OptimState.for_params(
            [p.data for p in self.params],
            lr=lr,
            betas=betas,
            eps=eps,
            weight_decay=weight_decay,
        )

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        adamw_step([p.data for p in self.params], [p.grad for p in self.params], self.state)


class PlateauScheduler:
    """
    Multiply the learning rate by factor after `patience` consecutive epochs
    without an improvement larger than min_delta.
    """

    def __init__(
        self,
        optimizer: AdamW,
        factor: float = 0.5,
        patience: int = 10,
        min_delta: float = 1e-6,
    ):
        if not 0.0 < factor < 1.0:
            raise ParameterError(f"factor must lie in (0, 1), got {factor}")
        if patience < 1:
            raise ParameterError(f"patience must be at least 1, got {patience}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_delta = min_delta
        self.best: Optional[float] = None
        self.num_bad_epochs = 0

    def step(self, validation_loss: float) -> float:
        """
        Record one epoch's validation loss and return the learning rate to use next.

        The first epoch only sets the reference loss and counts toward the
        plateau, so `patience` flat epochs cut the rate on the last of them.
        """
        if self.best is None:
            self.best = validation_loss
            self.num_bad_epochs = 1
        elif validation_loss < self.best - self.min_delta:
            self.best = validation_loss
            self.num_bad_epochs = 0
        else:
            self.num_bad_epochs += 1
        if self.num_bad_epochs >= self.patience:
            new_lr = self.optimizer.lr * self.factor
            logger.info(f"Validation plateau: lr {self.optimizer.lr:.3e} -> {new_lr:.3e}")
            self.optimizer.lr = new_lr
            self.num_bad_epochs = 0
        return self.optimizer.lr


def plateau_scheduler_step(scheduler: PlateauScheduler, validation_loss: float) -> float:
    return scheduler.step(validation_loss)


class EarlyStopping:
    """Signals a stop after `patience` epochs without improvement; inactive when disabled"""

    def __init__(self, patience: int = 60, min_delta: float = 1e-6, enabled: bool = False):
        self.patience = patience
        self.min_delta = min_delta
        self.enabled = enabled
        self.best = math.inf
        self.num_bad_epochs = 0

    def step(self, validation_loss: float) -> bool:
        if validation_loss < self.best - self.min_delta:
            self.best = validation_loss
            self.num_bad_epochs = 0
        else:
            self.num_bad_epochs += 1
        return self.enabled and self.num_bad_epochs >= self.patience
