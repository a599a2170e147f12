"""
On-the-fly photometric jitter and random affine warps
"""

import numpy as np
from scipy.ndimage import map_coordinates

from src.training.schemas import AugmentParams


def affine_warp(
    image: np.ndarray,
    angle_deg: float = 0.0,
    translate: tuple[float, float] = (0.0, 0.0),
    scale: float = 1.0,
) -> np.ndarray:
    """
    Rotate and scale about the image centre, then shift by translate = (dx, dy).

    Bilinear resampling through the inverse map; pixels sampled outside the
    source are zero.
    """
    h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    cos, sin = np.cos(theta), np.sin(theta)
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    y = rows - cy - translate[1]
    x = cols - cx - translate[0]
    src_x = (cos * x + sin * y) / scale + cx
    src_y = (-sin * x + cos * y) / scale + cy
    return map_coordinates(
        image, [src_y, src_x], order=1, mode="constant", cval=0.0
    )


def augment_sample(
    image: np.ndarray, params: AugmentParams, rng: np.random.Generator
) -> np.ndarray:
    """
    Jitter brightness and contrast with probability jitter_p, then apply one
    random affine draw. All random numbers are drawn every call, so the
    generator advances identically whether or not the jitter fires.
    """
    squeeze = image.ndim == 3
    img = np.asarray(image[0] if squeeze else image, dtype=np.float64)
    h, w = img.shape

    apply_jitter = rng.random() < params.jitter_p
    brightness = rng.uniform(*params.brightness)
    contrast = rng.uniform(*params.contrast)
    angle = rng.uniform(-params.rotation_deg, params.rotation_deg)
    max_shift = params.translation_px * max(h, w) / params.reference_size
    dx, dy = rng.uniform(-max_shift, max_shift, size=2)
    scale = rng.uniform(*params.scale)

    if apply_jitter:
        img = np.clip(img * brightness, 0.0, 1.0)
        mean = img.mean()
        img = np.clip((img - mean) * contrast + mean, 0.0, 1.0)

    out = np.clip(affine_warp(img, angle, (dx, dy), scale), 0.0, 1.0)
    return out[None] if squeeze else out


def augment_batch(
    images: np.ndarray, params: AugmentParams, seeds: list[list[int]]
) -> np.ndarray:
    """Augment (N, 1, H, W) images, each with its own derived seed"""
    return np.stack(
        [
            augment_sample(img, params, np.random.default_rng(seed))
            for img, seed in zip(images, seeds)
        ]
    )
