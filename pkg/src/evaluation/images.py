"""
Mean stage images and 8-bit binary PGM (P5) export
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

from src.exceptions import DataError, InputError

logger = logging.getLogger(__name__)


def mean_stage_image(
    images: np.ndarray, stages: Sequence[int], stage: int
) -> np.ndarray:
    """Pixelwise mean of the images labelled with stage"""
    stages_arr = np.asarray(stages)
    if len(images) != len(stages_arr):
        raise InputError(f"{len(images)} images but {len(stages_arr)} stage labels")
    mask = stages_arr == stage
    if not mask.any():
        raise DataError(f"No images of stage {stage}")
    return np.asarray(images, dtype=np.float64)[mask].sum(axis=0) / mask.sum()


def to_uint8(image: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Min-max normalise to 0..255; a constant image maps to zeros"""
    img = np.asarray(image, dtype=np.float64).squeeze()
    if img.ndim != 2:
        raise InputError(f"Expected a 2-D image, got shape {img.shape}")
    low, high = float(img.min()), float(img.max())
    if high > low:
        scaled = (img - low) / (high - low)
    else:
        scaled = np.zeros_like(img)
    return np.round(scaled * 255.0).astype(np.uint8), low, high


def write_normalized_pgm(image: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a min-max normalised P5 image plus a sidecar recording the range"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels, low, high = to_uint8(image)
    Image.fromarray(pixels).save(path, format="PPM")
    path.with_suffix(".txt").write_text(
        f"normalization=min-max\nmin={low!r}\nmax={high!r}\n"
    )
    return path


def write_pgm(image: np.ndarray, path: Union[str, Path]) -> Path:
    """Write [0, 1] pixels quantised to k/255 without rescaling"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(image, dtype=np.float64).squeeze()
    if img.min() < 0.0 or img.max() > 1.0:
        raise InputError(f"{path.name}: pixel values outside [0, 1]")
    pixels = np.round(img * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")
    return path


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit grayscale PGM into [0, 1] floats (k / 255)"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Image not found: {path}")
    with Image.open(path) as img:
        if img.mode != "L":
            raise DataError(f"{path.name}: expected 8-bit grayscale, got mode {img.mode}")
        pixels = np.asarray(img, dtype=np.uint8)
    return pixels.astype(np.float64) / 255.0
