"""
Pydantic schemas for model architecture configuration
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class AEConfig(BaseModel):
    """Convolutional autoencoder architecture"""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(32, ge=2)
    base_channels: int = Field(8, ge=1)
    num_blocks: int = Field(5, ge=1)
    latent_dim: int = Field(32, ge=2)
    dropout_p: float = Field(0.3, ge=0.0, lt=1.0)
    upsample_mode: Literal["nearest", "bilinear"] = "bilinear"
    seed: int = 0

    @model_validator(mode="after")
    def validate_geometry(self) -> "AEConfig":
        factor = 2**self.num_blocks
        if self.image_size % factor != 0:
            raise ValueError(
                f"image_size {self.image_size} must be divisible by 2^num_blocks = {factor}"
            )
        return self

    @property
    def bottleneck_size(self) -> int:
        """Spatial extent of the last encoder block"""
        return self.image_size // 2**self.num_blocks

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * 2 ** (self.num_blocks - 1)

    @classmethod
    def full_scale(cls) -> "AEConfig":
        """Published 224 px, five-block, 32-dimensional configuration"""
        return cls(image_size=224, base_channels=16, num_blocks=5, latent_dim=32)


class ViTConfig(BaseModel):
    """Vision Transformer classifier architecture"""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(32, ge=1)
    patch_size: int = Field(8, ge=1)
    embed_dim: int = Field(64, ge=1)
    num_heads: int = Field(2, ge=1)
    num_layers: int = Field(2, ge=1)
    mlp_ratio: int = Field(4, ge=1)
    num_classes: int = Field(10, ge=2)
    dropout_p: float = Field(0.3, ge=0.0, lt=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def validate_geometry(self) -> "ViTConfig":
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} must be divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} must be divisible by num_heads {self.num_heads}"
            )
        return self

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size**2

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @classmethod
    def full_scale(cls) -> "ViTConfig":
        """Published 224 px, P=32, 16-head, 12-layer configuration"""
        return cls(
            image_size=224, patch_size=32, embed_dim=768, num_heads=16, num_layers=12
        )
