"""
Optimisation, augmentation, cross-validation splits and the training loops
"""

from src.training.folds import stratified_folds
from src.training.optimizer import AdamW, EarlyStopping, OptimState, PlateauScheduler, adamw_step
from src.training.schemas import AugmentParams, FoldSplit, TrainConfig

__all__ = [
    "AdamW",
    "AugmentParams",
    "EarlyStopping",
    "FoldSplit",
    "OptimState",
    "PlateauScheduler",
    "TrainConfig",
    "adamw_step",
    "stratified_folds",
]
