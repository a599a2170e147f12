"""
Shared fixtures: tiny model configurations and datasets that keep the suite fast
"""

import numpy as np
import pytest

from src.models.schemas import AEConfig, ViTConfig
from src.synthdata.generator import generate_dataset
from src.synthdata.schemas import SynthConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_ae_cfg():
    """16 px, two blocks, 4x4x4 bottleneck"""
    return AEConfig(image_size=16, base_channels=2, num_blocks=2, latent_dim=4, seed=3)


@pytest.fixture
def tiny_vit_cfg():
    return ViTConfig(
        image_size=16,
        patch_size=8,
        embed_dim=8,
        num_heads=2,
        num_layers=1,
        mlp_ratio=2,
        num_classes=10,
        dropout_p=0.0,
        seed=5,
    )


@pytest.fixture
def tiny_synth_cfg():
    return SynthConfig(image_size=16, num_stages=3, samples_per_stage=8, seed=11)


@pytest.fixture
def tiny_dataset(tiny_synth_cfg):
    return generate_dataset(tiny_synth_cfg)


@pytest.fixture
def image_batch(rng):
    """Four 16x16 images strictly inside (0, 1)"""
    return rng.uniform(0.1, 0.9, size=(4, 1, 16, 16))
