"""
Training objectives for the autoencoder and the classifier
"""

from src.losses.classification import cross_entropy
from src.losses.reconstruction import (
    PerceptualExtractor,
    bce_loss,
    perceptual_loss,
    reconstruction_loss,
    total_ae_loss,
)
from src.losses.triplet import (
    Triplet,
    batch_triplet_loss,
    mean_triplet_loss,
    mine_semi_hard,
    ordinal_margin,
    triplet_loss,
)

__all__ = [
    "PerceptualExtractor",
    "Triplet",
    "batch_triplet_loss",
    "bce_loss",
    "cross_entropy",
    "mean_triplet_loss",
    "mine_semi_hard",
    "ordinal_margin",
    "perceptual_loss",
    "reconstruction_loss",
    "total_ae_loss",
    "triplet_loss",
]
