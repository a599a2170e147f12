"""
Dataset configuration and the in-memory staged sample collection
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.exceptions import DataError, InputError

SEXES = ("A", "B")


class SynthConfig(BaseModel):
    """Procedural dataset generation settings"""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(32, ge=8)
    num_stages: int = Field(10, ge=2)
    samples_per_stage: int = Field(20, ge=2)
    variability: float = Field(0.2, ge=0)
    noise_sigma: float = Field(0.02, ge=0)
    seed: int = 0

    @field_validator("samples_per_stage")
    @classmethod
    def validate_even(cls, v: int) -> int:
        if v % 2:
            raise ValueError(f"samples_per_stage must be even for sex balance, got {v}")
        return v


PRESETS = {
    "LOWVAR": {"variability": 0.2, "noise_sigma": 0.02},
    "HIGHVAR": {"variability": 1.0, "noise_sigma": 0.05},
}


def preset(name: str, **overrides) -> SynthConfig:
    """LOWVAR (compact stages) or HIGHVAR (broad intra-stage morphology)"""
    try:
        values = PRESETS[name.upper()]
    except KeyError:
        raise InputError(f"Unknown preset {name!r}; expected one of {sorted(PRESETS)}") from None
    return SynthConfig(**{**values, **overrides})


@dataclass
class StagedSample:
    """One grayscale (H, W) image with its ordinal stage and sex tag"""

    image: np.ndarray
    stage: int
    sex: str
    sample_id: str

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.ndim != 2:
            raise InputError(f"{self.sample_id}: image must be 2-D, got {self.image.shape}")
        if not np.all(np.isfinite(self.image)) or self.image.min() < 0 or self.image.max() > 1:
            raise InputError(f"{self.sample_id}: pixel values outside [0, 1]")
        if self.stage < 0:
            raise InputError(f"{self.sample_id}: negative stage {self.stage}")
        if self.sex not in SEXES:
            raise InputError(f"{self.sample_id}: sex must be one of {SEXES}, got {self.sex!r}")


@dataclass
class StagedDataset:
    """Ordered collection of samples addressable by id"""

    samples: list[StagedSample]
    num_stages: int = 10
    _by_id: dict[str, StagedSample] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {}
        for sample in self.samples:
            if sample.sample_id in self._by_id:
                raise DataError(f"Duplicate sample id {sample.sample_id}")
            if sample.stage >= self.num_stages:
                raise InputError(
                    f"{sample.sample_id}: stage {sample.stage} outside 0..{self.num_stages - 1}"
                )
            self._by_id[sample.sample_id] = sample
        sizes = {s.image.shape for s in self.samples}
        if len(sizes) > 1:
            raise DataError(f"Images have differing shapes: {sorted(sizes)}")

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[StagedSample]:
        return iter(self.samples)

    def __getitem__(self, sample_id: str) -> StagedSample:
        try:
            return self._by_id[sample_id]
        except KeyError:
            raise DataError(f"Unknown sample id {sample_id}") from None

    @property
    def image_size(self) -> int:
        if not self.samples:
            raise DataError("Dataset is empty")
        return self.samples[0].image.shape[0]

    def ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    def subset(self, ids: Iterable[str]) -> list[StagedSample]:
        return [self[i] for i in ids]

    def images(self, ids: Sequence[str]) -> np.ndarray:
        """(N, 1, H, W) stack in the given id order"""
        if not ids:
            return np.zeros((0, 1, self.image_size, self.image_size))
        return np.stack([self[i].image for i in ids])[:, None]

    def stages(self, ids: Sequence[str]) -> np.ndarray:
        return np.array([self[i].stage for i in ids], dtype=np.int64)
