"""
Procedural ordinal datasets with a controllable intra-stage variability knob
"""

import logging

import numpy as np

from src.synthdata.renderer import MorphParams, render_stage_image
from src.synthdata.schemas import SEXES, StagedDataset, StagedSample, SynthConfig

logger = logging.getLogger(__name__)


def generate_sample(cfg: SynthConfig, stage: int, index_in_stage: int) -> StagedSample:
    """Render one sample from its own generator seeded by (seed, stage, index)"""
    rng = np.random.default_rng([cfg.seed, stage, index_in_stage])
    sex = SEXES[index_in_stage % 2]
    morph = MorphParams.draw(rng, cfg.variability, sex)
    image = render_stage_image(stage, morph, cfg.image_size, cfg.num_stages)
    if cfg.noise_sigma > 0:
        image = image + rng.normal(0.0, cfg.noise_sigma, size=image.shape)
    image = np.round(np.clip(image, 0.0, 1.0) * 255.0) / 255.0
    return StagedSample(
        image=image,
        stage=stage,
        sex=sex,
        sample_id=f"s{stage * cfg.samples_per_stage + index_in_stage:05d}",
    )


def generate_dataset(cfg: SynthConfig) -> StagedDataset:
    """num_stages x samples_per_stage samples, half of each stage per sex"""
    samples = [
        generate_sample(cfg, stage, j)
        for stage in range(cfg.num_stages)
        for j in range(cfg.samples_per_stage)
    ]
    logger.info(
        f"Generated {len(samples)} samples ({cfg.num_stages} stages, "
        f"variability {cfg.variability}, noise {cfg.noise_sigma})"
    )
    return StagedDataset(samples=samples, num_stages=cfg.num_stages)
