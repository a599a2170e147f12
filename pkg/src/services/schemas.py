"""
Experiment configuration document
"""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import settings
from src.models.schemas import AEConfig, ViTConfig
from src.synthdata.schemas import SynthConfig
from src.training.schemas import AugmentParams, TrainConfig


class ExperimentConfig(BaseModel):
    """
    Everything a generate/run/diagnose invocation needs, as one JSON document.

    The top-level seed is propagated into every sub-configuration.
    """

    model_config = ConfigDict(extra="forbid")

    synth: SynthConfig = Field(default_factory=SynthConfig)
    ae: AEConfig = Field(default_factory=AEConfig)
    vit: ViTConfig = Field(default_factory=ViTConfig)
    ae_training: TrainConfig = Field(default_factory=lambda: TrainConfig(phase="ae"))
    classifier_training: TrainConfig = Field(
        default_factory=lambda: TrainConfig(phase="classifier")
    )
    augment: AugmentParams = Field(default_factory=AugmentParams)
    use_augmentation: bool = True
    use_ae: bool = True
    folds: int = Field(4, ge=2)
    dataset_dir: str = Field(default_factory=lambda: f"{settings.DATA_DIR}/synthetic")
    output_dir: str = Field(default_factory=lambda: f"{settings.OUTPUT_DIR}/experiment")
    perceptual_checkpoint: Optional[str] = None
    seed: int = 0

    @model_validator(mode="before")
    @classmethod
    def fill_phases(cls, data):
        if isinstance(data, dict):
            data = dict(data)
            for key, phase in (("ae_training", "ae"), ("classifier_training", "classifier")):
                section = data.get(key)
                if isinstance(section, dict):
                    data[key] = {"phase": phase, **section}
        return data

    @model_validator(mode="after")
    def validate_consistency(self) -> "ExperimentConfig":
        sizes = {
            "synth": self.synth.image_size,
            "ae": self.ae.image_size,
            "vit": self.vit.image_size,
        }
        if len(set(sizes.values())) != 1:
            raise ValueError(f"image_size must agree across sub-configs, got {sizes}")
        if self.vit.num_classes != self.synth.num_stages:
            raise ValueError(
                f"vit.num_classes ({self.vit.num_classes}) must equal "
                f"synth.num_stages ({self.synth.num_stages})"
            )
        if self.ae_training.phase != "ae" or self.classifier_training.phase != "classifier":
            raise ValueError("ae_training/classifier_training have mismatched phases")

        self.synth = self.synth.model_copy(update={"seed": self.seed})
        self.ae = self.ae.model_copy(update={"seed": self.seed})
        self.vit = self.vit.model_copy(update={"seed": self.seed})
        self.ae_training = self.ae_training.model_copy(update={"seed": self.seed})
        self.classifier_training = self.classifier_training.model_copy(
            update={"seed": self.seed}
        )
        return self
