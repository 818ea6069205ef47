"""
Central-difference gradient checks for the reverse-mode engine.

The reported error is the maximum over coordinates of
|analytic - numeric| / (|numeric| + 1e-8).
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from collections.abc import Sequence
from typing import Any

import numpy as np

from simmtm.exceptions import ContractError
from simmtm.tensor import Tensor
from simmtm.tensor import no_grad

logger = logging.getLogger(__name__)

RELATIVE_FLOOR = 1e-8


def grad_check(f: Callable[[Tensor], Tensor], x: Any, h: float = 1e-5) -> float:
    """
    Compare the analytic gradient of scalar `f` at `x` with central differences.

    Args:
        f: Differentiable scalar function of one tensor.
        x: Point of evaluation; copied into a fresh leaf.
        h: Finite-difference step, must be positive.

    Returns:
        Max relative error over the coordinates of x.
    """
    leaf = Tensor(x.values if isinstance(x, Tensor) else x, requires_grad=True)
    return grad_check_parameters(lambda: f(leaf), [leaf], h)


def grad_check_parameters(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    atol: float = 0.0,
) -> float:
    """
    Gradient check of a closure over several leaf tensors.

    Leaves are perturbed in place one coordinate at a time and restored.

    Args:
        f: Zero-argument closure rebuilding the scalar from `params`.
        params: Leaves to check.
        h: Finite-difference step, must be positive.
        atol: Coordinates whose absolute discrepancy is at most atol count as
            exact. Zero reproduces the plain relative criterion.

    Raises:
        simmtm.exceptions.ContractError: h is not positive.
    """
    if h <= 0:
        raise ContractError(f"finite-difference step must be positive, got {h}")

    for param in params:
        param.zero_grad()
    f().backward()
    analytic = [
        np.zeros_like(p.values) if p.grad is None else p.grad.copy() for p in params
    ]

    worst = 0.0
    for param, grad in zip(params, analytic):
        flat = param.values.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            with no_grad():
                flat[k] = original + h
                f_plus = f().item()
                flat[k] = original - h
                f_minus = f().item()
            flat[k] = original

            numeric = (f_plus - f_minus) / (2.0 * h)
            diff = abs(float(grad.reshape(-1)[k]) - numeric)
            if diff <= atol:
                continue
            worst = max(worst, diff / (abs(numeric) + RELATIVE_FLOOR))

    for param in params:
        param.zero_grad()

    logger.debug("gradient check over %d leaves: max relative error %.3e", len(params), worst)
    return worst
