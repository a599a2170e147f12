"""
Two-phase training: the triplet-regularised autoencoder first, then the
Vision Transformer on (optionally) frozen-autoencoder reconstructions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pandas as pd

from src.autodiff.tensor import Tensor, no_grad
from src.exceptions import ConfigError, DataError
from src.losses.classification import cross_entropy
from src.losses.reconstruction import (
    PerceptualExtractor,
    reconstruction_loss,
    total_ae_loss,
)
from src.losses.triplet import batch_triplet_loss, mine_semi_hard
from src.models.autoencoder import ConvAutoencoder, LatentEmbedding
from src.models.layers import Module
from src.models.schemas import AEConfig, ViTConfig
from src.models.vit import AttentionRecord, VisionTransformer
from src.synthdata.schemas import StagedDataset
from src.training.augment import augment_batch
from src.training.optimizer import AdamW, EarlyStopping, PlateauScheduler
from src.training.schemas import AugmentParams, FoldSplit, TrainConfig

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["epoch", "phase", "train_loss", "val_loss", "lr"]


@dataclass
class TrainingResult:
    """Best-validation weights and per-epoch loss curves of one phase"""

    phase: str
    state: dict[str, np.ndarray]
    curves: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf

    def curves_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.curves, columns=CURVE_COLUMNS)


def _batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield start, order[start : start + batch_size]


def _augmented(
    images: np.ndarray,
    idx: np.ndarray,
    augment: Optional[AugmentParams],
    seed: int,
    epoch: int,
) -> np.ndarray:
    if augment is None:
        return images[idx]
    return augment_batch(
        images[idx], augment, [[seed, epoch, int(i)] for i in idx]
    )


def _fit(
    model: Module,
    cfg: TrainConfig,
    n_train: int,
    batch_loss: Callable[[np.ndarray, int, int], Tensor],
    validation_loss: Callable[[int], Optional[float]],
) -> TrainingResult:
    """Epoch loop shared by both phases: AdamW, plateau schedule, best-val selection"""
    optimizer = AdamW(
        model.parameters(),
        lr=cfg.lr,
        betas=cfg.betas,
        eps=cfg.eps,
        weight_decay=cfg.weight_decay,
    )
    scheduler = PlateauScheduler(
        optimizer, cfg.scheduler_factor, cfg.scheduler_patience, cfg.min_delta
    )
    stopper = EarlyStopping(
        cfg.early_stopping_patience, cfg.min_delta, enabled=cfg.early_stopping
    )
    result = TrainingResult(phase=cfg.phase, state=model.state_dict())

    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n_train)
        total = 0.0
        for start, idx in _batches(order, cfg.batch_size):
            optimizer.zero_grad()
            loss = batch_loss(idx, epoch, start)
            if loss.requires_grad:
                loss.backward()
                optimizer.step()
            total += loss.item() * len(idx)
        train_loss = total / n_train

        model.eval()
        val = validation_loss(epoch)
        monitored = train_loss if val is None else val
        lr = optimizer.lr
        scheduler.step(monitored)

        if monitored < result.best_val_loss:
            result.best_val_loss = monitored
            result.best_epoch = epoch
            result.state = model.state_dict()
        result.curves.append(
            {
                "epoch": epoch,
                "phase": cfg.phase,
                "train_loss": train_loss,
                "val_loss": math.nan if val is None else val,
                "lr": lr,
            }
        )
        if epoch == 1 or epoch % cfg.log_every == 0 or epoch == cfg.epochs:
            logger.info(
                f"[{cfg.phase}] epoch {epoch}/{cfg.epochs} "
                f"train {train_loss:.5f} val {monitored:.5f} lr {lr:.2e}"
            )
        if stopper.step(monitored):
            logger.info(f"[{cfg.phase}] early stop at epoch {epoch}")
            break

    model.load_state_dict(result.state)
    model.eval()
    logger.info(
        f"[{cfg.phase}] best epoch {result.best_epoch} "
        f"(monitored loss {result.best_val_loss:.5f})"
    )
    return result


def train_autoencoder(
    dataset: StagedDataset,
    fold: FoldSplit,
    cfg: TrainConfig,
    ae_cfg: AEConfig,
    augment: Optional[AugmentParams] = None,
    extractor: Optional[PerceptualExtractor] = None,
) -> tuple[ConvAutoencoder, TrainingResult]:
    """
    Train the autoencoder on fold.train; validation loss drives the scheduler
    and best-checkpoint selection.

    Returns:
        The model with its best-validation weights loaded, and the curves.
    """
    if not fold.train:
        raise DataError(f"Fold {fold.fold}: empty training split")
    if dataset.image_size != ae_cfg.image_size:
        raise ConfigError(
            f"Dataset images are {dataset.image_size}px, AEConfig expects {ae_cfg.image_size}px"
        )
    extractor = extractor or PerceptualExtractor(seed=cfg.seed)
    num_stages = dataset.num_stages
    model = ConvAutoencoder(ae_cfg)
    train_images, train_stages = dataset.images(fold.train), dataset.stages(fold.train)
    val_images, val_stages = (
        dataset.images(fold.validation),
        dataset.stages(fold.validation),
    )

    def step_loss(idx: np.ndarray, epoch: int, start: int) -> Tensor:
        batch = _augmented(train_images, idx, augment, cfg.seed, epoch)
        return ae_batch_loss(
            model,
            batch,
            train_stages[idx],
            extractor,
            cfg.gamma,
            num_stages,
            np.random.default_rng([cfg.seed, epoch, start, 1]),
            np.random.default_rng([cfg.seed, epoch, start, 2]),
        )

    def val_loss(epoch: int) -> Optional[float]:
        if len(val_stages) == 0:
            return None
        total = 0.0
        with no_grad():
            for start, idx in _batches(np.arange(len(val_stages)), cfg.batch_size):
                loss = ae_batch_loss(
                    model,
                    val_images[idx],
                    val_stages[idx],
                    extractor,
                    cfg.gamma,
                    num_stages,
                    None,
                    np.random.default_rng([cfg.seed, start, 3]),
                )
                total += loss.item() * len(idx)
        return total / len(val_stages)

    logger.info(
        f"Training autoencoder on fold {fold.fold}: {len(fold.train)} train, "
        f"{len(fold.validation)} validation samples"
    )
    result = _fit(model, cfg, len(fold.train), step_loss, val_loss)
    return model, result


def ae_batch_loss(
    model: ConvAutoencoder,
    images: np.ndarray,
    stages: np.ndarray,
    extractor: PerceptualExtractor,
    gamma: float,
    num_stages: int,
    dropout_rng: Optional[np.random.Generator],
    mining_rng: np.random.Generator,
) -> Tensor:
    """Weighted triplet + (BCE + perceptual) loss of one image batch"""
    z = model.encode_batch(images, dropout_rng)
    recon = model.decode_batch(z)
    triplet_term = None
    if gamma > 0:
        embeddings = [
            LatentEmbedding.from_vector(z.data[j], stage=int(stages[j]))
            for j in range(len(stages))
        ]
        triplets = mine_semi_hard(embeddings, mining_rng, num_stages)
        triplet_term = batch_triplet_loss(z, triplets, num_stages)
    recon_term = reconstruction_loss(images, recon, extractor)
    return total_ae_loss(triplet_term, recon_term, gamma)


def preprocess(
    images: np.ndarray,
    ae_model: Optional[ConvAutoencoder],
    batch_size: int = 64,
) -> np.ndarray:
    """Pass images through the frozen autoencoder when one is given"""
    if ae_model is None or len(images) == 0:
        return images
    return np.concatenate(
        [
            ae_model.reconstruct(images[start : start + batch_size])
            for start in range(0, len(images), batch_size)
        ]
    )


def train_classifier(
    dataset: StagedDataset,
    fold: FoldSplit,
    cfg: TrainConfig,
    vit_cfg: ViTConfig,
    ae_model: Optional[ConvAutoencoder] = None,
    augment: Optional[AugmentParams] = None,
) -> tuple[VisionTransformer, TrainingResult]:
    """
    Train the ViT with cross-entropy. With ae_model, every (augmented) batch
    is replaced by its frozen-autoencoder reconstruction; without it this is
    the ViT-only baseline.
    """
    if not fold.train:
        raise DataError(f"Fold {fold.fold}: empty training split")
    if dataset.image_size != vit_cfg.image_size:
        raise ConfigError(
            f"Dataset images are {dataset.image_size}px, ViTConfig expects {vit_cfg.image_size}px"
        )
    if ae_model is not None:
        if ae_model.cfg.image_size != vit_cfg.image_size:
            raise ConfigError(
                f"Autoencoder image size {ae_model.cfg.image_size} differs from "
                f"ViT image size {vit_cfg.image_size}"
            )
        ae_model.freeze().eval()
    if vit_cfg.num_classes < dataset.num_stages:
        raise ConfigError(
            f"ViT has {vit_cfg.num_classes} classes for {dataset.num_stages} stages"
        )

    model = VisionTransformer(vit_cfg)
    train_images, train_stages = dataset.images(fold.train), dataset.stages(fold.train)
    val_images = preprocess(dataset.images(fold.validation), ae_model, cfg.batch_size)
    val_stages = dataset.stages(fold.validation)

    def step_loss(idx: np.ndarray, epoch: int, start: int) -> Tensor:
        batch = _augmented(train_images, idx, augment, cfg.seed, epoch)
        batch = preprocess(batch, ae_model, cfg.batch_size)
        logits, _ = model(batch, np.random.default_rng([cfg.seed, epoch, start, 1]))
        return cross_entropy(logits, train_stages[idx])

    def val_loss(epoch: int) -> Optional[float]:
        if len(val_stages) == 0:
            return None
        total = 0.0
        with no_grad():
            for _, idx in _batches(np.arange(len(val_stages)), cfg.batch_size):
                logits, _ = model(val_images[idx])
                total += cross_entropy(logits, val_stages[idx]).item() * len(idx)
        return total / len(val_stages)

    mode = "AE+ViT" if ae_model is not None else "ViT-only"
    logger.info(
        f"Training classifier ({mode}) on fold {fold.fold}: {len(fold.train)} train, "
        f"{len(fold.validation)} validation samples"
    )
    result = _fit(model, cfg, len(fold.train), step_loss, val_loss)
    return model, result


def classify(
    model: VisionTransformer,
    images: np.ndarray,
    ae_model: Optional[ConvAutoencoder] = None,
    batch_size: int = 64,
) -> tuple[np.ndarray, np.ndarray, list[AttentionRecord]]:
    """Inference: predicted stages, logits and one attention record per image"""
    model.eval()
    inputs = preprocess(images, ae_model, batch_size)
    logits_parts: list[np.ndarray] = []
    records: list[AttentionRecord] = []
    with no_grad():
        for start in range(0, len(inputs), batch_size):
            logits, batch_records = model(inputs[start : start + batch_size])
            logits_parts.append(logits.data)
            records.extend(batch_records)
    logits_all = (
        np.concatenate(logits_parts)
        if logits_parts
        else np.zeros((0, model.cfg.num_classes))
    )
    return logits_all.argmax(axis=1), logits_all, records
