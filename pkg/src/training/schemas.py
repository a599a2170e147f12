"""
Pydantic schemas for training, augmentation and cross-validation splits
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PHASE_DEFAULTS = {
    "ae": {"epochs": 300, "batch_size": 128, "lr": 5e-4},
    "classifier": {"epochs": 300, "batch_size": 64, "lr": 1e-4},
}


class TrainConfig(BaseModel):
    """Optimisation settings for one training phase"""

    model_config = ConfigDict(extra="forbid")

    phase: Literal["ae", "classifier"] = "ae"
    epochs: int = Field(300, ge=1)
    batch_size: int = Field(128, ge=1)
    lr: float = Field(5e-4, gt=0)
    weight_decay: float = Field(1e-5, ge=0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    scheduler_factor: float = Field(0.5, gt=0, lt=1)
    scheduler_patience: int = Field(10, ge=1)
    min_delta: float = Field(1e-6, ge=0)
    gamma: float = Field(0.7, ge=0, le=1)
    early_stopping: bool = False
    early_stopping_patience: int = Field(60, ge=1)
    log_every: int = Field(10, ge=1)
    seed: int = 0

    @model_validator(mode="before")
    @classmethod
    def apply_phase_defaults(cls, data):
        if isinstance(data, dict):
            phase = data.get("phase", "ae")
            defaults = PHASE_DEFAULTS.get(phase, {})
            data = {**defaults, **data}
        return data

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v: tuple[float, float]) -> tuple[float, float]:
        if not all(0.0 <= b < 1.0 for b in v):
            raise ValueError(f"betas must lie in [0, 1), got {v}")
        return v


class AugmentParams(BaseModel):
    """
    On-the-fly augmentation ranges.

    translation_px is expressed at reference_size pixels and scaled to the
    actual image size.
    """

    model_config = ConfigDict(extra="forbid")

    jitter_p: float = Field(0.3, ge=0, le=1)
    brightness: tuple[float, float] = (0.8, 1.2)
    contrast: tuple[float, float] = (0.8, 1.2)
    rotation_deg: float = Field(5.0, ge=0)
    translation_px: float = Field(12.0, ge=0)
    reference_size: int = Field(224, ge=1)
    scale: tuple[float, float] = (0.8, 1.2)

    @field_validator("brightness", "contrast", "scale")
    @classmethod
    def validate_range(cls, v: tuple[float, float]) -> tuple[float, float]:
        low, high = v
        if low > high:
            raise ValueError(f"range must be ordered (low <= high), got {v}")
        if low <= 0:
            raise ValueError(f"factors must be positive, got {v}")
        return v

    @classmethod
    def identity(cls) -> "AugmentParams":
        """Parameters under which augmentation leaves images unchanged"""
        return cls(
            jitter_p=0.0,
            brightness=(1.0, 1.0),
            contrast=(1.0, 1.0),
            rotation_deg=0.0,
            translation_px=0.0,
            scale=(1.0, 1.0),
        )


class FoldSplit(BaseModel):
    """Sample ids of one cross-validation fold"""

    fold: int = Field(..., ge=0)
    train: list[str]
    validation: list[str]
    test: list[str]

    @model_validator(mode="after")
    def validate_disjoint(self) -> "FoldSplit":
        train, val, test = set(self.train), set(self.validation), set(self.test)
        if train & val or train & test or val & test:
            raise ValueError(f"Fold {self.fold}: splits overlap")
        return self

    @property
    def all_ids(self) -> set[str]:
        return set(self.train) | set(self.validation) | set(self.test)
