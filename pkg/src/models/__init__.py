"""
Autoencoder and Vision Transformer models built on src.autodiff
"""

from src.models.autoencoder import ConvAutoencoder, LatentEmbedding
from src.models.schemas import AEConfig, ViTConfig
from src.models.vit import AttentionRecord, VisionTransformer

__all__ = [
    "AEConfig",
    "AttentionRecord",
    "ConvAutoencoder",
    "LatentEmbedding",
    "ViTConfig",
    "VisionTransformer",
]
