"""
Attention rollout: attributing the CLS token's attention to input patches by
chaining residual-augmented, head-averaged attention across layers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.autodiff.tensor import no_grad
from src.exceptions import DataError, DimensionError
from src.losses.reconstruction import PerceptualExtractor, perceptual_loss
from src.models.vit import AttentionRecord

logger = logging.getLogger(__name__)


@dataclass
class AttentionMap:
    """Non-negative patch-grid map summing to 1"""

    grid: np.ndarray
    image_size: int
    degenerate: bool = False

    @property
    def grid_size(self) -> int:
        return self.grid.shape[0]

    def render(self) -> np.ndarray:
        """Nearest-neighbour expansion of the grid to (image_size, image_size)"""
        cell = self.image_size // self.grid_size
        if cell * self.grid_size != self.image_size:
            raise DimensionError(
                f"Image size {self.image_size} is not a multiple of grid {self.grid_size}"
            )
        return np.kron(self.grid, np.ones((cell, cell)))


def residual_attention(layer: np.ndarray) -> np.ndarray:
    """Head mean, 0.5 A + 0.5 I, rows renormalised"""
    mean = layer.mean(axis=0)
    augmented = 0.5 * mean + 0.5 * np.eye(mean.shape[0])
    return augmented / augmented.sum(axis=-1, keepdims=True)


def rollout_matrices(rec: AttentionRecord, tol: float = 1e-9) -> list[np.ndarray]:
    """The per-layer residual-augmented matrices used by the rollout"""
    rec.validate(tol)
    return [residual_attention(layer) for layer in rec.layers]


def _cls_map(rollout: np.ndarray, image_size: Optional[int]) -> AttentionMap:
    weights = rollout[0, 1:]
    n = weights.size
    grid = math.isqrt(n)
    if grid * grid != n:
        raise DimensionError(f"{n} patch tokens do not form a square grid")
    size = image_size or grid
    total = weights.sum()
    if total <= 0.0:
        logger.warning("CLS rollout puts no mass on patches; returning a uniform map")
        return AttentionMap(np.full((grid, grid), 1.0 / n), size, degenerate=True)
    return AttentionMap((weights / total).reshape(grid, grid), size)


def attention_rollout(
    rec: AttentionRecord, image_size: Optional[int] = None, tol: float = 1e-9
) -> AttentionMap:
    """
    Rollout R = A_L ... A_1 over residual-augmented layers; the CLS row
    restricted to patch tokens and renormalised, on the patch grid.

    Raises:
        ContractError: Some stored attention row is not stochastic within tol.
    """
    matrices = rollout_matrices(rec, tol)
    rollout = np.eye(matrices[0].shape[0])
    for augmented in matrices:
        rollout = augmented @ rollout
    return _cls_map(rollout, image_size)


def rollout_per_layer(
    rec: AttentionRecord, image_size: Optional[int] = None, tol: float = 1e-9
) -> list[AttentionMap]:
    """Rollout maps truncated after each layer 1..L"""
    maps = []
    rollout = None
    for augmented in rollout_matrices(rec, tol):
        rollout = augmented if rollout is None else augmented @ rollout
        maps.append(_cls_map(rollout, image_size))
    return maps


def crown_attention_share(attention: AttentionMap) -> float:
    """Fraction of the map's mass in the upper half of the patch grid"""
    half = attention.grid_size // 2
    return float(attention.grid[:half].sum() / attention.grid.sum())


def mean_attention_map(maps: list[AttentionMap]) -> AttentionMap:
    if not maps:
        raise DataError("No attention maps to average")
    grid = np.mean([m.grid for m in maps], axis=0)
    return AttentionMap(grid / grid.sum(), maps[0].image_size)


def attention_similarity_heatmap(
    maps: Sequence[AttentionMap],
    extractor: PerceptualExtractor,
    stages: Optional[Sequence[int]] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Pairwise perceptual distance between rendered attention maps.

    When stages are given, maps are first stably sorted by stage. The upper
    triangle is computed and mirrored; the diagonal is zero.

    Returns:
        The n x n matrix and the ordering applied to the input maps.
    """
    n = len(maps)
    order = np.arange(n) if stages is None else np.argsort(np.asarray(stages), kind="stable")
    rendered = [maps[i].render() for i in order]
    shapes = {r.shape for r in rendered}
    if len(shapes) > 1:
        raise DimensionError(f"Attention maps rendered at different resolutions: {shapes}")

    matrix = np.zeros((n, n))
    with no_grad():
        for i in range(n):
            for j in range(i + 1, n):
                value = perceptual_loss(rendered[i][None], rendered[j][None], extractor).item()
                matrix[i, j] = matrix[j, i] = value
    return matrix, order
