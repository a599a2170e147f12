"""
Central finite-difference verification of analytic gradients
"""

import logging
from typing import Callable

import numpy as np

from src.autodiff.tensor import Tensor, no_grad
from src.exceptions import ContractError

logger = logging.getLogger(__name__)


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    abs_tol: float = 1e-9,
) -> float:
    """
    Compare backward() against central differences of f at x.

    Args:
        f: Scalar-valued function of x; may close over other tensors.
        x: Tensor to differentiate with respect to. Its data is perturbed in
            place and restored afterwards.
        h: Finite-difference step.
        abs_tol: Coordinates whose absolute discrepancy is below this are
            counted as exact (round-off on vanishing gradients).

    Returns:
        max over coordinates of |analytic - numeric| / (|analytic| + 1e-8)
    """
    previous_flag = x.requires_grad
    x.data = np.ascontiguousarray(x.data)
    x.requires_grad = True
    x.grad = None
    try:
        out = f(x)
        if out.size != 1:
            raise ContractError(f"finite_diff_check needs a scalar f, got {out.shape}")
        out.backward()
        analytic = (
            np.zeros_like(x.data) if x.grad is None else x.grad.copy()
        ).reshape(-1)

        numeric = np.empty_like(analytic)
        flat = x.data.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + h
                upper = f(x).item()
                flat[i] = original - h
                lower = f(x).item()
                flat[i] = original
                numeric[i] = (upper - lower) / (2.0 * h)
    finally:
        x.requires_grad = previous_flag
        x.grad = None

    diff = np.abs(analytic - numeric)
    diff[diff <= abs_tol] = 0.0
    rel = diff / (np.abs(analytic) + 1e-8)
    worst = float(rel.max()) if rel.size else 0.0
    logger.debug(f"finite_diff_check over {flat.size} coordinates: max rel {worst:.3e}")
    return worst
