"""
Variable-margin ordinal triplet loss and semi-hard negative mining.

The margin between an anchor of stage y_a and a negative of stage y_n is
|y_a - y_n| / (K - 1), so distant stages are pushed further apart.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.exceptions import ContractError, InputError
from src.models.autoencoder import LatentEmbedding

logger = logging.getLogger(__name__)

NUM_STAGES = 10


def _check_stage(stage: int, num_stages: int) -> None:
    if not 0 <= stage < num_stages:
        raise InputError(f"Stage {stage} outside 0..{num_stages - 1}")


def ordinal_margin(y_a: int, y_n: int, num_stages: int = NUM_STAGES) -> float:
    _check_stage(y_a, num_stages)
    _check_stage(y_n, num_stages)
    if y_a == y_n:
        raise ContractError(f"Negative has the anchor's stage {y_a}")
    return abs(y_a - y_n) / (num_stages - 1)


@dataclass
class Triplet:
    """Anchor/positive/negative embeddings plus their batch positions"""

    anchor: LatentEmbedding
    positive: LatentEmbedding
    negative: LatentEmbedding
    y_a: int
    y_p: int
    y_n: int
    anchor_index: Optional[int] = None
    positive_index: Optional[int] = None
    negative_index: Optional[int] = None

    def __post_init__(self):
        if self.y_a != self.y_p:
            raise ContractError(f"Positive stage {self.y_p} != anchor stage {self.y_a}")
        if self.y_a == self.y_n:
            raise ContractError(f"Negative shares the anchor stage {self.y_a}")

    @property
    def degenerate(self) -> bool:
        return self.anchor.degenerate or self.positive.degenerate or self.negative.degenerate


def triplet_loss(t: Triplet, num_stages: int = NUM_STAGES) -> float:
    """max(0, D(a, p) - D(a, n) + margin) on unit-norm embeddings"""
    if t.degenerate:
        raise ContractError("Triplet contains a zero embedding")
    d_ap = float(np.linalg.norm(t.anchor.z_norm - t.positive.z_norm))
    d_an = float(np.linalg.norm(t.anchor.z_norm - t.negative.z_norm))
    return max(0.0, d_ap - d_an + ordinal_margin(t.y_a, t.y_n, num_stages))


def mean_triplet_loss(
    triplets: Sequence[Triplet], num_stages: int = NUM_STAGES
) -> tuple[float, int]:
    """Mean loss over non-degenerate triplets and the number skipped"""
    values = [triplet_loss(t, num_stages) for t in triplets if not t.degenerate]
    skipped = len(triplets) - len(values)
    if skipped:
        logger.warning(f"Skipped {skipped} triplets with zero embeddings")
    if not values:
        return 0.0, skipped
    return float(np.mean(values)), skipped


def mine_semi_hard(
    batch: Sequence[LatentEmbedding],
    rng: np.random.Generator,
    num_stages: int = NUM_STAGES,
) -> list[Triplet]:
    """
    Build one triplet per ordered (anchor, positive) same-stage pair.

    A negative is drawn uniformly from the semi-hard band
    D(a, p) < D(a, n) < D(a, p) + margin(y_a, y_n); when the band is empty the
    closest negative is taken. Degenerate embeddings never participate.
    """
    usable = [i for i, e in enumerate(batch) if not e.degenerate]
    skipped = len(batch) - len(usable)
    if skipped:
        logger.warning(f"Mining ignores {skipped} zero embeddings")
    if not usable:
        return []

    for i in usable:
        if batch[i].stage is None:
            raise ContractError(f"Embedding {i} has no stage label")
        _check_stage(batch[i].stage, num_stages)

    stages = np.array([batch[i].stage for i in usable])
    if np.unique(stages).size < 2:
        logger.warning("Batch holds a single stage; no triplets mined")
        return []

    z = np.stack([batch[i].z_norm for i in usable])
    dist = np.linalg.norm(z[:, None, :] - z[None, :, :], axis=-1)

    triplets: list[Triplet] = []
    fallback = 0
    for a in range(len(usable)):
        negatives = np.flatnonzero(stages != stages[a])
        margins = np.abs(stages[a] - stages[negatives]) / (num_stages - 1)
        for p in np.flatnonzero(stages == stages[a]):
            if p == a:
                continue
            d_ap = dist[a, p]
            d_an = dist[a, negatives]
            band = negatives[(d_an > d_ap) & (d_an < d_ap + margins)]
            if band.size:
                n = int(rng.choice(band))
            else:
                n = int(negatives[np.argmin(d_an)])
                fallback += 1
            ia, ip, ineg = usable[a], usable[p], usable[n]
            triplets.append(
                Triplet(
                    anchor=batch[ia],
                    positive=batch[ip],
                    negative=batch[ineg],
                    y_a=int(stages[a]),
                    y_p=int(stages[p]),
                    y_n=int(stages[n]),
                    anchor_index=ia,
                    positive_index=ip,
                    negative_index=ineg,
                )
            )
    logger.debug(f"Mined {len(triplets)} triplets ({fallback} hardest-negative fallbacks)")
    return triplets


def batch_triplet_loss(
    z: Tensor, triplets: Sequence[Triplet], num_stages: int = NUM_STAGES
) -> Optional[Tensor]:
    """
    Differentiable mean triplet loss over rows of the latent batch z.

    Triplets must carry batch indices into z. Returns None for an empty list.
    """
    if not triplets:
        return None
    anchors = np.array([t.anchor_index for t in triplets])
    positives = np.array([t.positive_index for t in triplets])
    negatives = np.array([t.negative_index for t in triplets])
    margins = np.array([ordinal_margin(t.y_a, t.y_n, num_stages) for t in triplets])

    z_norm = ops.l2_normalize(z, axis=-1)
    d_ap = ops.row_distance(ops.take(z_norm, anchors), ops.take(z_norm, positives))
    d_an = ops.row_distance(ops.take(z_norm, anchors), ops.take(z_norm, negatives))
    hinge = ops.relu(ops.add(ops.sub(d_ap, d_an), Tensor(margins)))
    return ops.mean(hinge)
