"""
Metrics, attention rollout and latent-space diagnostics
"""

from src.evaluation.latent import (
    intra_class_distances,
    latent_centroid_distances,
    pca_project,
)
from src.evaluation.metrics import ConfusionMatrix, accuracy, mae, weighted_kappa
from src.evaluation.report import FoldMetrics, MetricsReport
from src.evaluation.rollout import (
    AttentionMap,
    attention_rollout,
    attention_similarity_heatmap,
)

__all__ = [
    "AttentionMap",
    "ConfusionMatrix",
    "FoldMetrics",
    "MetricsReport",
    "accuracy",
    "attention_rollout",
    "attention_similarity_heatmap",
    "intra_class_distances",
    "latent_centroid_distances",
    "mae",
    "pca_project",
    "weighted_kappa",
]
