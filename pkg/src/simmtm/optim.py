"""Adam with standard moment defaults; no schedules, no weight decay."""

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from simmtm.exceptions import ConfigError
from simmtm.tensor import Array
from simmtm.tensor import Tensor


class Adam:
    """Bias-corrected first and second moment estimates per parameter."""

    logger = logging.getLogger(__name__)

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        if not all(0.0 <= beta < 1.0 for beta in betas):
            raise ConfigError(f"Adam betas must lie in [0, 1), got {betas}")

        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.steps = 0
        self._first: list[Array] = [np.zeros_like(p.values) for p in self.params]
        self._second: list[Array] = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        """Update every parameter in place; a missing gradient counts as zero."""
        self.steps += 1
        beta1, beta2 = self.betas
        correct1 = 1.0 - beta1**self.steps
        correct2 = 1.0 - beta2**self.steps

        for param, first, second in zip(self.params, self._first, self._second):
            grad = np.zeros_like(param.values) if param.grad is None else param.grad
            first *= beta1
            first += (1.0 - beta1) * grad
            second *= beta2
            second += (1.0 - beta2) * grad * grad
            if self.lr == 0:
                continue
            update = self.lr * (first / correct1) / (np.sqrt(second / correct2) + self.eps)
            param.values[...] = param.values - update

        self.logger.debug("step %d over %d parameters", self.steps, len(self.params))
