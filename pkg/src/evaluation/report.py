"""
Per-fold metric reports and CSV serialisation of diagnostics
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from src.evaluation.metrics import ConfusionMatrix, accuracy, mae, weighted_kappa
from src.exceptions import UndefinedKappaError

logger = logging.getLogger(__name__)

MISSING = "NA"
METRIC_COLUMNS = ["accuracy", "kappa_w", "mae"]


class FoldMetrics(BaseModel):
    """Test-set metrics of one fold; kappa_w is None when undefined"""

    fold: int = Field(..., ge=0)
    accuracy: float = Field(..., ge=0, le=1)
    kappa_w: Optional[float] = Field(None, ge=-1, le=1)
    mae: float = Field(..., ge=0)

    @classmethod
    def evaluate(
        cls,
        fold: int,
        true_stages: Sequence[int],
        predicted_stages: Sequence[int],
        num_classes: int = 10,
    ) -> "FoldMetrics":
        cm = ConfusionMatrix.from_labels(true_stages, predicted_stages, num_classes)
        try:
            kappa: Optional[float] = weighted_kappa(cm)
        except UndefinedKappaError as e:
            logger.warning(f"Fold {fold}: {e}")
            kappa = None
        return cls(
            fold=fold,
            accuracy=accuracy(cm),
            kappa_w=kappa,
            mae=mae(true_stages, predicted_stages),
        )


def format_mean_std(values: Sequence[Optional[float]]) -> str:
    """'mean (std)' with sample standard deviation; missing values are ignored"""
    finite = np.array([v for v in values if v is not None and np.isfinite(v)])
    if finite.size == 0:
        return MISSING
    std = float(finite.std(ddof=1)) if finite.size > 1 else 0.0
    return f"{finite.mean():.4f} ({std:.4f})"


@dataclass
class MetricsReport:
    """Fold metrics plus the latent and attention diagnostics of a run"""

    folds: list[FoldMetrics] = field(default_factory=list)
    centroid_distances: Optional[np.ndarray] = None
    intra_distances: Optional[np.ndarray] = None
    attention_similarity: dict[int, np.ndarray] = field(default_factory=dict)

    def summary(self) -> dict[str, str]:
        return {
            column: format_mean_std([getattr(f, column) for f in self.folds])
            for column in METRIC_COLUMNS
        }

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "fold": str(f.fold),
                "accuracy": f"{f.accuracy:.6f}",
                "kappa_w": MISSING if f.kappa_w is None else f"{f.kappa_w:.6f}",
                "mae": f"{f.mae:.6f}",
            }
            for f in sorted(self.folds, key=lambda f: f.fold)
        ]
        rows.append({"fold": "mean (std)", **self.summary()})
        return pd.DataFrame(rows, columns=["fold"] + METRIC_COLUMNS)

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path

    @classmethod
    def read_folds(cls, path: Union[str, Path]) -> list[FoldMetrics]:
        """Fold rows of a metrics CSV written by write_csv"""
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        folds = []
        for _, row in frame[frame["fold"] != "mean (std)"].iterrows():
            folds.append(
                FoldMetrics(
                    fold=int(row["fold"]),
                    accuracy=float(row["accuracy"]),
                    kappa_w=None if row["kappa_w"] == MISSING else float(row["kappa_w"]),
                    mae=float(row["mae"]),
                )
            )
        return folds


def write_matrix_csv(
    matrix: np.ndarray,
    path: Union[str, Path],
    labels: Optional[Sequence] = None,
    corner: str = "stage",
) -> Path:
    """Square matrix with row/column labels; NaN cells written as NA"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = list(range(matrix.shape[0])) if labels is None else list(labels)
    frame = pd.DataFrame(matrix, index=labels, columns=labels)
    frame.index.name = corner
    frame.to_csv(path, na_rep=MISSING, float_format="%.10f")
    return path


def write_vector_csv(
    values: np.ndarray,
    path: Union[str, Path],
    column: str,
    index_name: str = "stage",
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({index_name: np.arange(len(values)), column: values})
    frame.to_csv(path, index=False, na_rep=MISSING, float_format="%.10f")
    return path


def write_frame_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep=MISSING, float_format="%.10f")
    return path
