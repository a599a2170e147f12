from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import DataError, InputError
from src.synthdata import (
    MorphParams,
    StagedDataset,
    StagedSample,
    SynthConfig,
    generate_dataset,
    load_dataset,
    preset,
    save_dataset,
)
from src.synthdata.renderer import root_extent


def intra_stage_spread(dataset):
    """Mean over stages of the per-pixel standard deviation within a stage"""
    spreads = []
    for stage in range(dataset.num_stages):
        ids = [s.sample_id for s in dataset if s.stage == stage]
        spreads.append(dataset.images(ids).std(axis=0).mean())
    return float(np.mean(spreads))


class TestGenerator:
    """Procedural staged datasets"""

    @pytest.mark.unit
    def test_counts_and_balance(self, tiny_dataset):
        assert len(tiny_dataset) == 24
        assert Counter(s.stage for s in tiny_dataset) == {0: 8, 1: 8, 2: 8}
        for stage in range(3):
            sexes = Counter(s.sex for s in tiny_dataset if s.stage == stage)
            assert sexes == {"A": 4, "B": 4}
        assert tiny_dataset.ids()[:2] == ["s00000", "s00001"]
        assert tiny_dataset.image_size == 16

    @pytest.mark.unit
    def test_pixels_are_quantised_to_unit_range(self, tiny_dataset):
        images = tiny_dataset.images(tiny_dataset.ids())
        assert images.shape == (24, 1, 16, 16)
        assert images.min() >= 0.0 and images.max() <= 1.0
        assert np.allclose(images * 255.0, np.round(images * 255.0), atol=1e-9)

    @pytest.mark.unit
    def test_deterministic_per_seed(self, tiny_synth_cfg):
        a = generate_dataset(tiny_synth_cfg)
        b = generate_dataset(tiny_synth_cfg)
        assert all(np.array_equal(x.image, y.image) for x, y in zip(a, b))
        other = generate_dataset(tiny_synth_cfg.model_copy(update={"seed": 12}))
        assert not all(np.array_equal(x.image, y.image) for x, y in zip(a, other))

    @pytest.mark.unit
    def test_no_variability_gives_one_prototype_per_stage_and_sex(self):
        cfg = SynthConfig(image_size=16, num_stages=3, samples_per_stage=4, variability=0.0, noise_sigma=0.0)
        dataset = generate_dataset(cfg)
        for stage in range(3):
            for sex in ("A", "B"):
                images = [s.image for s in dataset if s.stage == stage and s.sex == sex]
                assert all(np.array_equal(images[0], img) for img in images)

    @pytest.mark.unit
    def test_roots_lengthen_with_stage(self):
        extents = [root_extent(stage, MorphParams()) for stage in range(10)]
        assert all(b >= a for a, b in zip(extents, extents[1:]))
        assert extents[-1] > extents[0]

    @pytest.mark.slow
    def test_highvar_spreads_more_than_lowvar(self):
        low = generate_dataset(preset("LOWVAR", image_size=32, samples_per_stage=10, seed=1))
        high = generate_dataset(preset("HIGHVAR", image_size=32, samples_per_stage=10, seed=1))
        assert intra_stage_spread(high) > intra_stage_spread(low)


class TestConfig:
    """Dataset configuration and presets"""

    @pytest.mark.unit
    def test_presets(self):
        low, high = preset("LOWVAR"), preset("highvar")
        assert (low.variability, low.noise_sigma) == (0.2, 0.02)
        assert (high.variability, high.noise_sigma) == (1.0, 0.05)
        assert preset("LOWVAR", seed=7).seed == 7
        with pytest.raises(InputError):
            preset("MIDVAR")

    @pytest.mark.unit
    def test_validation(self):
        with pytest.raises(ValidationError):
            SynthConfig(samples_per_stage=5)
        with pytest.raises(ValidationError):
            SynthConfig(num_stages=1)
        with pytest.raises(ValidationError):
            SynthConfig(colour=True)


class TestStagedDataset:
    """Sample and collection invariants"""

    def sample(self, sample_id="a", stage=0, sex="A", value=0.5):
        return StagedSample(image=np.full((4, 4), value), stage=stage, sex=sex, sample_id=sample_id)

    @pytest.mark.unit
    def test_sample_validation(self):
        with pytest.raises(InputError):
            self.sample(value=1.5)
        with pytest.raises(InputError):
            self.sample(sex="C")
        with pytest.raises(InputError):
            StagedSample(image=np.zeros(4), stage=0, sex="A", sample_id="flat")

    @pytest.mark.unit
    def test_dataset_validation(self):
        with pytest.raises(DataError):
            StagedDataset([self.sample("a"), self.sample("a")])
        with pytest.raises(InputError):
            StagedDataset([self.sample(stage=3)], num_stages=3)
        dataset = StagedDataset([self.sample("a"), self.sample("b", stage=2)], num_stages=3)
        with pytest.raises(DataError):
            dataset["zzz"]
        assert dataset.images([]).shape == (0, 1, 4, 4)
        assert dataset.stages(["b", "a"]).tolist() == [2, 0]


class TestStorage:
    """Manifest + PGM directories"""

    @pytest.mark.unit
    def test_round_trip(self, tiny_dataset, tmp_path):
        save_dataset(tiny_dataset, tmp_path / "data")
        assert (tmp_path / "data" / "manifest.csv").is_file()
        loaded = load_dataset(tmp_path / "data", num_stages=3)
        assert loaded.ids() == tiny_dataset.ids()
        for original, restored in zip(tiny_dataset, loaded):
            assert restored.stage == original.stage
            assert restored.sex == original.sex
            assert np.array_equal(restored.image, original.image)

    @pytest.mark.unit
    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path)

    @pytest.mark.unit
    def test_manifest_without_columns(self, tmp_path):
        (tmp_path / "manifest.csv").write_text("id,stage\ns0,1\n")
        with pytest.raises(DataError):
            load_dataset(tmp_path)

    @pytest.mark.unit
    def test_missing_image(self, tmp_path):
        (tmp_path / "manifest.csv").write_text("id,stage,sex,filename\ns0,1,A,images/s0.pgm\n")
        with pytest.raises(DataError):
            load_dataset(tmp_path)
