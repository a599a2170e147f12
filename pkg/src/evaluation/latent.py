"""
Latent-space separability diagnostics on L2-normalised embeddings: stage
centroid cosine distances, intra-stage spread and a power-iteration PCA.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from src.exceptions import ConvergenceError, InputError, ParameterError
from src.models.autoencoder import LatentEmbedding

logger = logging.getLogger(__name__)


def _usable(embeddings: Sequence[LatentEmbedding]) -> list[LatentEmbedding]:
    kept = [e for e in embeddings if not e.degenerate]
    if len(kept) != len(embeddings):
        logger.warning(f"Ignoring {len(embeddings) - len(kept)} zero embeddings")
    for e in kept:
        if e.stage is None:
            raise InputError(f"Embedding {e.sample_id} has no stage label")
    return kept


def stage_centroids(
    embeddings: Sequence[LatentEmbedding], num_stages: int = 10
) -> np.ndarray:
    """(K, d) unit-norm centroids of z_norm per stage; NaN rows for absent stages"""
    kept = _usable(embeddings)
    if not kept:
        raise InputError("No usable embeddings")
    dim = kept[0].z_norm.size
    centroids = np.full((num_stages, dim), np.nan)
    for stage in range(num_stages):
        members = [e.z_norm for e in kept if e.stage == stage]
        if not members:
            continue
        mean = np.mean(members, axis=0)
        norm = np.linalg.norm(mean)
        if norm > 0:
            centroids[stage] = mean / norm
    return centroids


def latent_centroid_distances(
    embeddings: Sequence[LatentEmbedding], num_stages: int = 10
) -> np.ndarray:
    """
    K x K cosine distances 1 - <c_i, c_j> between renormalised stage centroids.

    Entries involving a stage without embeddings are NaN. The matrix is
    symmetric with a zero diagonal for present stages and clipped to [0, 2].
    """
    c = stage_centroids(embeddings, num_stages)
    present = ~np.isnan(c).any(axis=1)
    distances = np.full((num_stages, num_stages), np.nan)
    block = 1.0 - c[present] @ c[present].T
    block = np.clip(0.5 * (block + block.T), 0.0, 2.0)
    np.fill_diagonal(block, 0.0)
    distances[np.ix_(present, present)] = block
    return distances


def intra_class_distances(
    embeddings: Sequence[LatentEmbedding], num_stages: int = 10
) -> np.ndarray:
    """Per stage, mean 1 - <z_i, z_j> over unordered member pairs; NaN below two members"""
    kept = _usable(embeddings)
    result = np.full(num_stages, np.nan)
    for stage in range(num_stages):
        members = np.array([e.z_norm for e in kept if e.stage == stage])
        if len(members) < 2:
            continue
        gram = members @ members.T
        upper = np.triu_indices(len(members), k=1)
        result[stage] = float(np.clip(1.0 - gram[upper], 0.0, 2.0).mean())
    return result


def mean_off_diagonal(matrix: np.ndarray) -> float:
    """Mean of the finite off-diagonal entries"""
    mask = ~np.eye(matrix.shape[0], dtype=bool) & np.isfinite(matrix)
    return float(matrix[mask].mean()) if mask.any() else float("nan")


@dataclass
class PCAResult:
    projections: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained: np.ndarray
    mean: np.ndarray


def _as_matrix(data: Union[np.ndarray, Sequence[LatentEmbedding]]) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return np.asarray(data, dtype=np.float64)
    return np.array([e.z_norm for e in data], dtype=np.float64)


def pca_project(
    data: Union[np.ndarray, Sequence[LatentEmbedding]],
    dims: int = 3,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    seed: int = 0,
) -> PCAResult:
    """
    Project mean-centred data onto the top principal directions.

    Eigenvectors of the sample covariance are found one at a time by power
    iteration, deflating each found component and re-orthogonalising against
    the earlier ones. Iteration stops when ||C v - lambda v|| falls below
    tol * max(1, trace C). Each component is signed so that its
    largest-magnitude coordinate is positive.

    Raises:
        InputError: Fewer samples than dims, or non-finite values.
        ParameterError: dims exceeds the data dimension.
        ConvergenceError: A component did not converge within max_iter.
    """
    x = _as_matrix(data)
    if x.ndim != 2 or x.shape[0] < dims:
        raise InputError(f"PCA to {dims} dims needs at least {dims} samples, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("PCA input contains non-finite values")
    if dims < 1 or dims > x.shape[1]:
        raise ParameterError(f"dims must be in 1..{x.shape[1]}, got {dims}")

    mean = x.mean(axis=0)
    centred = x - mean
    cov = centred.T @ centred / max(x.shape[0] - 1, 1)
    trace = float(np.trace(cov))
    threshold = tol * max(1.0, trace)
    rng = np.random.default_rng(seed)

    deflated = cov.copy()
    components: list[np.ndarray] = []
    eigenvalues: list[float] = []
    for index in range(dims):
        v = rng.normal(size=cov.shape[0])
        for u in components:
            v -= (v @ u) * u
        v /= np.linalg.norm(v)
        residual = np.inf
        lam = 0.0
        for _ in range(max_iter):
            w = deflated @ v
            for u in components:
                w -= (w @ u) * u
            lam = float(v @ w)
            residual = float(np.linalg.norm(w - lam * v))
            if residual < threshold:
                break
            norm = np.linalg.norm(w)
            if norm < threshold:
                # remaining variance is zero; any orthogonal direction will do
                lam, residual = 0.0, 0.0
                break
            v = w / norm
        else:
            raise ConvergenceError(
                f"Power iteration for component {index} did not converge in {max_iter} iterations",
                residual,
            )
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components.append(v)
        eigenvalues.append(max(lam, 0.0))
        deflated = deflated - lam * np.outer(v, v)

    comps = np.array(components)
    eig = np.array(eigenvalues)
    explained = eig / trace if trace > 0 else np.zeros_like(eig)
    logger.debug(f"PCA explained variance fractions: {np.round(explained, 4).tolist()}")
    return PCAResult(
        projections=centred @ comps.T,
        components=comps,
        eigenvalues=eig,
        explained=explained,
        mean=mean,
    )
