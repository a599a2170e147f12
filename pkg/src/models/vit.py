"""
Vision Transformer classifier with recorded attention probabilities
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.exceptions import ContractError, DimensionError
from src.models.autoencoder import check_pixel_range
from src.models.layers import Dropout, LayerNorm, Linear, Module, truncated_normal
from src.models.schemas import ViTConfig

logger = logging.getLogger(__name__)


@dataclass
class AttentionRecord:
    """Per-layer attention probabilities (heads, tokens, tokens) of one image"""

    layers: list[np.ndarray] = field(default_factory=list)

    def validate(self, tol: float = 1e-9) -> None:
        for index, attn in enumerate(self.layers):
            if attn.ndim != 3 or attn.shape[1] != attn.shape[2]:
                raise ContractError(f"Layer {index}: bad attention shape {attn.shape}")
            if np.any(attn < 0) or np.max(np.abs(attn.sum(axis=-1) - 1.0)) > tol:
                raise ContractError(f"Layer {index}: attention rows are not stochastic")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def num_tokens(self) -> int:
        return self.layers[0].shape[-1]


def vit_patchify(images, patch_size: int) -> Tensor:
    """
    Split images into row-major, non-overlapping flattened patches.

    (1, H, W) -> (N, P*P) and (B, 1, H, W) -> (B, N, P*P) with N = H*W / P^2.
    """
    x = ops.as_tensor(images)
    single = x.ndim == 3
    if single:
        x = ops.reshape(x, (1,) + x.shape)
    if x.ndim != 4 or x.shape[1] != 1:
        raise DimensionError(f"Expected single-channel images, got shape {x.shape}")
    b, _, h, w = x.shape
    p = patch_size
    if h % p or w % p:
        raise DimensionError(f"Image {h}x{w} is not divisible by patch size {p}")
    gh, gw = h // p, w // p
    x = ops.reshape(x, (b, gh, p, gw, p))
    x = ops.transpose(x, (0, 1, 3, 2, 4))
    x = ops.reshape(x, (b, gh * gw, p * p))
    if single:
        x = ops.reshape(x, x.shape[1:])
    return x


def vit_unpatchify(patches: np.ndarray, patch_size: int, grid: tuple[int, int]) -> np.ndarray:
    """Inverse of vit_patchify for a single image: (N, P*P) -> (1, H, W)"""
    gh, gw = grid
    p = patch_size
    x = np.asarray(patches).reshape(gh, gw, p, p).transpose(0, 2, 1, 3)
    return x.reshape(1, gh * p, gw * p)


@dataclass
class AttentionWeights:
    """Projection parameters of one multi-head attention layer; matrices are (d, d)"""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Optional[Tensor] = None
    bk: Optional[Tensor] = None
    bv: Optional[Tensor] = None
    bo: Optional[Tensor] = None


def multi_head_attention(
    x, weights: AttentionWeights, num_heads: int
) -> tuple[Tensor, np.ndarray]:
    """
    Scaled dot-product attention over num_heads heads.

    Args:
        x: Token matrix (T, d) or batch (B, T, d).
        weights: Query, key, value and output projections.
        num_heads: Number of heads M; d must be divisible by M.

    Returns:
        Output with the shape of x and attention probabilities (B, M, T, T),
        or (M, T, T) for an unbatched input.
    """
    x = ops.as_tensor(x)
    single = x.ndim == 2
    if single:
        x = ops.reshape(x, (1,) + x.shape)
    b, t, d = x.shape
    if d % num_heads:
        raise DimensionError(f"Embedding size {d} is not divisible by {num_heads} heads")
    dh = d // num_heads

    def heads(w: Tensor, bias: Optional[Tensor]) -> Tensor:
        projected = ops.linear(x, w, bias)
        return ops.transpose(ops.reshape(projected, (b, t, num_heads, dh)), (0, 2, 1, 3))

    q = heads(weights.wq, weights.bq)
    k = heads(weights.wk, weights.bk)
    v = heads(weights.wv, weights.bv)
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    attn = ops.softmax(scores, axis=-1)
    context = ops.matmul(attn, v)
    context = ops.reshape(ops.transpose(context, (0, 2, 1, 3)), (b, t, d))
    out = ops.linear(context, weights.wo, weights.bo)
    probs = attn.data
    if single:
        return ops.reshape(out, (t, d)), probs[0]
    return out, probs


class MultiHeadAttention(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        super().__init__()
        self.num_heads = num_heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)

    def weights(self) -> AttentionWeights:
        return AttentionWeights(
            wq=self.query.weight,
            wk=self.key.weight,
            wv=self.value.weight,
            wo=self.proj.weight,
            bq=self.query.bias,
            bk=self.key.bias,
            bv=self.value.bias,
            bo=self.proj.bias,
        )

    def forward(self, x: Tensor) -> tuple[Tensor, np.ndarray]:
        return multi_head_attention(x, self.weights(), self.num_heads)


class EncoderBlock(Module):
    """Pre-norm transformer encoder block with a GELU MLP"""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, num_heads, rng)
        self.norm2 = LayerNorm(dim)
        self.fc1 = Linear(dim, dim * mlp_ratio, rng)
        self.fc2 = Linear(dim * mlp_ratio, dim, rng)

    def forward(self, x: Tensor) -> tuple[Tensor, np.ndarray]:
        attended, probs = self.attn(self.norm1(x))
        x = ops.add(x, attended)
        x = ops.add(x, self.fc2(ops.gelu(self.fc1(self.norm2(x)))))
        return x, probs


class VisionTransformer(Module):
    def __init__(self, cfg: ViTConfig):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        d = cfg.embed_dim
        self.patch_embed = Linear(cfg.patch_size**2, d, rng)
        self.cls_token = Tensor(np.zeros(d), requires_grad=True)
        self.pos_embed = Tensor(
            truncated_normal(rng, (cfg.num_patches + 1, d)), requires_grad=True
        )
        self.blocks = [
            EncoderBlock(d, cfg.num_heads, cfg.mlp_ratio, rng)
            for _ in range(cfg.num_layers)
        ]
        self.norm = LayerNorm(d)
        self.dropout = Dropout(cfg.dropout_p)
        self.head = Linear(d, cfg.num_classes, rng)

    def patchify(self, images) -> Tensor:
        x = ops.as_tensor(images)
        if x.ndim == 3:
            x = ops.reshape(x, (1,) + x.shape)
        size = self.cfg.image_size
        if x.shape[1:] != (1, size, size):
            raise DimensionError(
                f"Expected images of shape (N, 1, {size}, {size}), got {x.shape}"
            )
        check_pixel_range(x.data)
        return vit_patchify(x, self.cfg.patch_size)

    def forward(
        self, images, rng: Optional[np.random.Generator] = None
    ) -> tuple[Tensor, list[AttentionRecord]]:
        """(B, 1, H, W) images -> (B, num_classes) logits and one record per image"""
        return self.forward_patches(self.patchify(images), rng=rng)

    def forward_patches(
        self,
        patches: Tensor,
        order: Optional[Sequence[int]] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[Tensor, list[AttentionRecord]]:
        """
        Run the encoder on (B, N, P*P) patches.

        When order is given, patches and their positional encodings are both
        permuted by it.
        """
        patches = ops.as_tensor(patches)
        b, n, _ = patches.shape
        if n != self.cfg.num_patches:
            raise DimensionError(f"Expected {self.cfg.num_patches} patches, got {n}")
        d = self.cfg.embed_dim
        rows = np.arange(n + 1)
        if order is not None:
            order = np.asarray(order)
            patches = ops.take(patches, (slice(None), order))
            rows = np.concatenate([[0], order + 1])

        tokens = self.patch_embed(patches)
        cls = ops.expand(ops.reshape(self.cls_token, (1, d)), b)
        x = ops.concat([cls, tokens], axis=1)
        x = ops.add(x, ops.expand(ops.take(self.pos_embed, rows), b))

        per_layer = []
        for block in self.blocks:
            x, probs = block(x)
            per_layer.append(probs)
        x = self.norm(x)
        cls_out = self.dropout(ops.take(x, (slice(None), 0)), rng)
        logits = self.head(cls_out)

        records = [
            AttentionRecord(layers=[probs[i] for probs in per_layer]) for i in range(b)
        ]
        return logits, records
