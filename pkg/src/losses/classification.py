"""
Classifier objective
"""

from typing import Sequence, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.exceptions import DimensionError, InputError


def cross_entropy(logits, labels: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """Mean of -log softmax(logits)[label]; accepts (K,) with an int or (B, K) with B labels"""
    x = ops.as_tensor(logits)
    if x.ndim == 1:
        x = ops.reshape(x, (1,) + x.shape)
    labels_arr = np.atleast_1d(np.asarray(labels))
    if x.ndim != 2 or labels_arr.shape != (x.shape[0],):
        raise DimensionError(
            f"cross_entropy: logits {x.shape} do not match {labels_arr.size} labels"
        )
    k = x.shape[1]
    if not np.issubdtype(labels_arr.dtype, np.integer):
        raise InputError(f"Labels must be integers, got dtype {labels_arr.dtype}")
    if labels_arr.min() < 0 or labels_arr.max() >= k:
        raise InputError(f"Label outside 0..{k - 1}: {labels_arr.tolist()}")
    picked = ops.take(ops.log_softmax(x, axis=-1), (np.arange(x.shape[0]), labels_arr))
    return ops.neg(ops.mean(picked))
