"""
Convolutional autoencoder producing a compact stage-aware latent code
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor, no_grad
from src.exceptions import DimensionError, InputError
from src.models.layers import Conv2d, Dropout, Linear, Module
from src.models.schemas import AEConfig

logger = logging.getLogger(__name__)


@dataclass
class LatentEmbedding:
    """Latent code z with its unit-norm copy and optional stage label"""

    z: np.ndarray
    z_norm: np.ndarray
    stage: Optional[int] = None
    sample_id: Optional[str] = None
    # True when ||z|| == 0; then z_norm is z itself
    degenerate: bool = False

    @classmethod
    def from_vector(
        cls,
        z: np.ndarray,
        stage: Optional[int] = None,
        sample_id: Optional[str] = None,
    ) -> "LatentEmbedding":
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(z))
        if norm == 0.0:
            return cls(z=z, z_norm=z.copy(), stage=stage, sample_id=sample_id, degenerate=True)
        return cls(z=z, z_norm=z / norm, stage=stage, sample_id=sample_id)


def check_pixel_range(images: np.ndarray) -> None:
    if not np.all(np.isfinite(images)):
        raise InputError("Image contains non-finite pixels")
    if images.size and (images.min() < 0.0 or images.max() > 1.0):
        raise InputError(
            f"Pixel values must lie in [0, 1], got [{images.min():.4g}, {images.max():.4g}]"
        )


class ConvAutoencoder(Module):
    """Stride-2 conv encoder, linear bottleneck, upsample+conv decoder"""

    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)

        channels = [1] + [cfg.base_channels * 2**i for i in range(cfg.num_blocks)]
        self.encoder = [
            Conv2d(channels[i], channels[i + 1], rng, stride=2, pad=1)
            for i in range(cfg.num_blocks)
        ]
        self.dropout = Dropout(cfg.dropout_p)
        flat = cfg.bottleneck_channels * cfg.bottleneck_size**2
        self.to_latent = Linear(flat, cfg.latent_dim, rng)

        self.from_latent = Linear(cfg.latent_dim, flat, rng)
        decoder_channels = channels[:0:-1] + [cfg.base_channels]
        self.decoder = [
            Conv2d(decoder_channels[i], decoder_channels[i + 1], rng)
            for i in range(cfg.num_blocks)
        ]
        self.output = Conv2d(cfg.base_channels, 1, rng)

    def _as_batch(self, images) -> Tensor:
        x = ops.as_tensor(images)
        size = self.cfg.image_size
        if x.ndim == 3:
            x = ops.reshape(x, (1,) + x.shape)
        if x.ndim != 4 or x.shape[1:] != (1, size, size):
            raise DimensionError(
                f"Expected images of shape (N, 1, {size}, {size}), got {x.shape}"
            )
        check_pixel_range(x.data)
        return x

    def encode_batch(
        self, images, rng: Optional[np.random.Generator] = None
    ) -> Tensor:
        """(N, 1, H, W) or (1, H, W) pixels in [0, 1] -> (N, latent_dim)"""
        x = self._as_batch(images)
        for conv in self.encoder:
            x = ops.relu(conv(x))
        x = self.dropout(x, rng)
        x = ops.reshape(x, (x.shape[0], -1))
        return self.to_latent(x)

    def decode_batch(self, z: Tensor) -> Tensor:
        """(N, latent_dim) -> (N, 1, H, W) in (0, 1)"""
        z = ops.as_tensor(z)
        if z.ndim == 1:
            z = ops.reshape(z, (1,) + z.shape)
        if not np.all(np.isfinite(z.data)):
            raise InputError("Latent code contains non-finite values")
        s = self.cfg.bottleneck_size
        x = self.from_latent(z)
        x = ops.reshape(x, (z.shape[0], self.cfg.bottleneck_channels, s, s))
        for conv in self.decoder:
            x = ops.relu(conv(ops.upsample2x(x, self.cfg.upsample_mode)))
        return ops.sigmoid(self.output(x))

    def forward(self, images, rng: Optional[np.random.Generator] = None):
        z = self.encode_batch(images, rng)
        return z, self.decode_batch(z)

    def encode(
        self,
        image,
        stage: Optional[int] = None,
        sample_id: Optional[str] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> LatentEmbedding:
        """Encode a single (1, H, W) image into a LatentEmbedding"""
        z = self.encode_batch(image, rng)
        if z.shape[0] != 1:
            raise DimensionError(f"encode() takes one image, got batch of {z.shape[0]}")
        return LatentEmbedding.from_vector(z.data[0], stage=stage, sample_id=sample_id)

    def decode(self, z) -> Tensor:
        """Decode one latent vector into a (1, H, W) image"""
        out = self.decode_batch(ops.as_tensor(z))
        return ops.reshape(out, out.shape[1:])

    def embed(
        self,
        images: np.ndarray,
        stages: Optional[list[int]] = None,
        ids: Optional[list[str]] = None,
    ) -> list[LatentEmbedding]:
        """Inference-mode embeddings for a stack of (N, 1, H, W) images"""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                z = self.encode_batch(images).data
        finally:
            self.train(was_training)
        return [
            LatentEmbedding.from_vector(
                z[i],
                stage=None if stages is None else int(stages[i]),
                sample_id=None if ids is None else ids[i],
            )
            for i in range(z.shape[0])
        ]

    def reconstruct(self, images: np.ndarray) -> np.ndarray:
        """Encode then decode in inference mode, without recording a graph"""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                _, out = self.forward(images)
        finally:
            self.train(was_training)
        return out.data
