"""
Reverse-mode automatic differentiation on float64 numpy arrays
"""

from src.autodiff.gradcheck import finite_diff_check
from src.autodiff.tensor import Tape, Tensor, is_grad_enabled, no_grad

__all__ = ["Tape", "Tensor", "finite_diff_check", "is_grad_enabled", "no_grad"]
