"""
Reconstruction objectives: pixelwise binary cross-entropy and a perceptual
distance between channel-normalised deep features.

The perceptual feature extractor is a fixed, seeded stack of stride-2
conv+relu layers. It can be stored and replaced through the OSTG checkpoint
format, e.g. by externally calibrated weights.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.exceptions import DimensionError, InputError, ParameterError
from src.models.checkpoint import load_checkpoint, save_checkpoint
from src.models.layers import Conv2d, Module

logger = logging.getLogger(__name__)

BCE_EPS = 1e-7
FEATURE_EPS = 1e-10


def _as_image_batch(x) -> Tensor:
    t = ops.as_tensor(x)
    if t.ndim == 2:
        t = ops.reshape(t, (1, 1) + t.shape)
    elif t.ndim == 3:
        t = ops.reshape(t, (1,) + t.shape)
    if t.ndim != 4:
        raise DimensionError(f"Expected an image or image batch, got shape {t.shape}")
    return t


def bce_loss(target, reconstruction, eps: float = BCE_EPS) -> Tensor:
    """Mean binary cross-entropy with the reconstruction clamped to [eps, 1 - eps]"""
    recon = ops.as_tensor(reconstruction)
    target_data = np.asarray(
        target.data if isinstance(target, Tensor) else target, dtype=np.float64
    )
    if target_data.shape != recon.shape:
        raise DimensionError(
            f"bce_loss: target {target_data.shape} vs reconstruction {recon.shape}"
        )
    if target_data.size and (target_data.min() < 0.0 or target_data.max() > 1.0):
        raise InputError("bce_loss: target pixels must lie in [0, 1]")

    clamped = ops.clip(recon, eps, 1.0 - eps)
    positive = ops.mul(Tensor(target_data), ops.log(clamped))
    negative = ops.mul(Tensor(1.0 - target_data), ops.log(ops.sub(1.0, clamped)))
    return ops.neg(ops.mean(ops.add(positive, negative)))


class PerceptualExtractor(Module):
    """Frozen conv+relu feature stack with per-layer channel weights"""

    def __init__(
        self,
        seed: int = 0,
        channels: Sequence[int] = (8, 16, 32),
    ):
        super().__init__()
        rng = np.random.default_rng(seed)
        widths = [1] + list(channels)
        self.layers = [
            Conv2d(widths[i], widths[i + 1], rng, stride=2, pad=1)
            for i in range(len(channels))
        ]
        self.channel_weights = [Tensor(np.ones(c)) for c in channels]
        self._lock()

    def _lock(self) -> None:
        for p in self.parameters():
            p.requires_grad = False
            p.data.flags.writeable = False

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        super().load_state_dict(state)
        self._lock()

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], seed: int = 0) -> "PerceptualExtractor":
        extractor = cls(seed=seed)
        extractor.load_state_dict(load_checkpoint(path))
        logger.info(f"Loaded perceptual extractor weights from {path}")
        return extractor

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(self.state_dict(), path)

    def features(self, images) -> list[Tensor]:
        x = _as_image_batch(images)
        out = []
        for conv in self.layers:
            x = ops.relu(conv(x))
            out.append(x)
        return out


def perceptual_loss(
    image, reconstruction, extractor: PerceptualExtractor
) -> Tensor:
    """
    Sum over layers of the spatially averaged squared distance between
    channel-normalised, channel-weighted features; averaged over the batch.
    """
    a = _as_image_batch(image)
    b = _as_image_batch(reconstruction)
    if a.shape != b.shape:
        raise DimensionError(f"perceptual_loss: shapes {a.shape} vs {b.shape}")

    total: Optional[Tensor] = None
    for fa, fb, w in zip(
        extractor.features(a), extractor.features(b), extractor.channel_weights
    ):
        na = ops.l2_normalize(fa, axis=1, eps=FEATURE_EPS)
        nb = ops.l2_normalize(fb, axis=1, eps=FEATURE_EPS)
        weight = Tensor(np.broadcast_to(w.data[None, :, None, None], na.shape))
        diff = ops.mul(ops.sub(na, nb), weight)
        per_position = ops.sum(ops.mul(diff, diff), axis=1)
        per_image = ops.mean(per_position, axis=(1, 2))
        total = per_image if total is None else ops.add(total, per_image)
    assert total is not None
    return ops.mean(total)


def reconstruction_loss(
    images, reconstructions, extractor: PerceptualExtractor
) -> Tensor:
    """BCE plus perceptual distance, each averaged over the batch"""
    return ops.add(
        bce_loss(images, reconstructions), perceptual_loss(images, reconstructions, extractor)
    )


def total_ae_loss(
    triplet_term: Union[Tensor, float, None],
    recon_term: Union[Tensor, float],
    gamma: float = 0.7,
) -> Tensor:
    """gamma * triplet + (1 - gamma) * reconstruction; a missing triplet term counts as 0"""
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError(f"gamma must lie in [0, 1], got {gamma}")
    if triplet_term is None:
        if gamma > 0:
            logger.warning("No triplets available; triplet term set to 0")
        triplet_term = 0.0
    return ops.add(
        ops.mul(ops.as_tensor(triplet_term), gamma),
        ops.mul(ops.as_tensor(recon_term), 1.0 - gamma),
    )
