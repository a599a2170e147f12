"""
Classification metrics for ordinal stage predictions
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from src.exceptions import InputError, UndefinedKappaError

logger = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    """K x K counts; rows are true stages, columns predicted stages"""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise InputError(f"Confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise InputError("Confusion matrix has negative counts")

    @classmethod
    def from_labels(
        cls,
        true_stages: Sequence[int],
        predicted_stages: Sequence[int],
        num_classes: int = 10,
    ) -> "ConfusionMatrix":
        y = np.asarray(true_stages, dtype=np.int64)
        p = np.asarray(predicted_stages, dtype=np.int64)
        if y.shape != p.shape:
            raise InputError(f"Label vectors differ in length: {y.size} vs {p.size}")
        for name, arr in (("true", y), ("predicted", p)):
            if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
                raise InputError(f"{name} labels outside 0..{num_classes - 1}")
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(counts, (y, p), 1)
        return cls(counts)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _require_samples(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise InputError("Confusion matrix is empty")


def accuracy(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return float(np.trace(cm.counts) / cm.total)


def linear_weights(num_classes: int) -> np.ndarray:
    """Agreement weights w_ij = 1 - |i - j| / (K - 1)"""
    idx = np.arange(num_classes)
    return 1.0 - np.abs(idx[:, None] - idx[None, :]) / (num_classes - 1)


def weighted_kappa(cm: ConfusionMatrix) -> float:
    """
    Linearly weighted Cohen's kappa, (p_o - p_e) / (1 - p_e).

    Raises:
        InputError: Empty matrix or fewer than two classes.
        UndefinedKappaError: Chance agreement p_e equals 1.
    """
    _require_samples(cm)
    k = cm.num_classes
    if k < 2:
        raise InputError("Weighted kappa needs at least two classes")
    n = float(cm.total)
    w = linear_weights(k)
    observed = cm.counts.astype(np.float64)
    p_o = float((w * observed).sum() / n)
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0))
    p_e = float((w * expected).sum() / n**2)
    if np.isclose(p_e, 1.0, rtol=0.0, atol=1e-15):
        raise UndefinedKappaError(
            "Chance agreement is 1 (single-cell marginals); weighted kappa undefined"
        )
    return (p_o - p_e) / (1.0 - p_e)


def mae(true_stages: Sequence[int], predicted_stages: Sequence[int]) -> float:
    y = np.asarray(true_stages, dtype=np.float64)
    p = np.asarray(predicted_stages, dtype=np.float64)
    if y.shape != p.shape:
        raise InputError(f"Label vectors differ in length: {y.size} vs {p.size}")
    if y.size == 0:
        raise InputError("mae needs at least one sample")
    return float(np.abs(y - p).mean())


def per_stage_summary(
    true_stages: Sequence[int],
    predicted_stages: Sequence[int],
    num_stages: int = 10,
    crown_shares: Optional[Sequence[float]] = None,
) -> pd.DataFrame:
    """
    Per true stage: count, accuracy, MAE, mean predicted stage and, when
    given, the mean share of rollout attention on the crown region.
    Stages without samples get NaN entries.
    """
    y = np.asarray(true_stages, dtype=np.int64)
    p = np.asarray(predicted_stages, dtype=np.int64)
    if y.shape != p.shape:
        raise InputError(f"Label vectors differ in length: {y.size} vs {p.size}")
    shares = None if crown_shares is None else np.asarray(crown_shares, dtype=np.float64)

    rows = []
    for stage in range(num_stages):
        mask = y == stage
        count = int(mask.sum())
        row = {
            "stage": stage,
            "count": count,
            "accuracy": float((p[mask] == stage).mean()) if count else np.nan,
            "mae": float(np.abs(p[mask] - stage).mean()) if count else np.nan,
            "mean_predicted": float(p[mask].mean()) if count else np.nan,
        }
        if shares is not None:
            row["crown_attention"] = float(shares[mask].mean()) if count else np.nan
        rows.append(row)
    return pd.DataFrame(rows)
