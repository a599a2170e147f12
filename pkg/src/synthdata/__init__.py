"""
Synthetic staged image datasets
"""

from src.synthdata.generator import generate_dataset
from src.synthdata.renderer import MorphParams, render_stage_image
from src.synthdata.schemas import PRESETS, StagedDataset, StagedSample, SynthConfig, preset
from src.synthdata.storage import load_dataset, save_dataset

__all__ = [
    "MorphParams",
    "PRESETS",
    "StagedDataset",
    "StagedSample",
    "SynthConfig",
    "generate_dataset",
    "load_dataset",
    "preset",
    "render_stage_image",
    "save_dataset",
]
