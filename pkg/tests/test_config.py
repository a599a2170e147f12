"""
Settings, logging, the exception hierarchy and the experiment configuration
"""

import json
import logging
import pickle
from unittest.mock import patch

import pytest
from pydantic import ValidationError
from pythonjsonlogger import jsonlogger

from src.config import Settings, settings
from src.exceptions import (
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    FoldError,
    InputError,
    MissingCheckpointError,
    NumericError,
    ParameterError,
    StratificationError,
    UndefinedKappaError,
)
from src.logging_config import configure_logging
from src.services.schemas import ExperimentConfig


class TestSettings:
    """Environment-driven settings"""

    @pytest.mark.unit
    def test_defaults(self):
        s = Settings(_env_file=None)
        assert s.LOG_FORMAT in ("text", "json")
        assert s.ORDISTAGE_THREADS >= 1

    @pytest.mark.unit
    def test_log_level_normalised(self):
        assert Settings(_env_file=None, LOG_LEVEL="debug").LOG_LEVEL == "DEBUG"
        with pytest.raises(ValidationError):
            Settings(_env_file=None, LOG_LEVEL="LOUD")

    @pytest.mark.unit
    def test_threads_bounded_by_cpu_count(self):
        with patch("src.config.psutil.cpu_count", return_value=2):
            assert Settings(_env_file=None, ORDISTAGE_THREADS=64).ORDISTAGE_THREADS == 2
        with pytest.raises(ValidationError):
            Settings(_env_file=None, ORDISTAGE_THREADS=0)

    @pytest.mark.unit
    def test_reads_environment(self, monkeypatch):
        monkeypatch.setenv("LOG_FORMAT", "json")
        assert Settings(_env_file=None).LOG_FORMAT == "json"


class TestLogging:
    """Text and JSON log output"""

    @pytest.fixture(autouse=True)
    def restore_root_logger(self):
        root = logging.getLogger()
        handlers, level = list(root.handlers), root.level
        yield
        root.handlers[:] = handlers
        root.setLevel(level)

    @pytest.mark.unit
    def test_json_format(self, capsys):
        with patch.object(settings, "LOG_FORMAT", "json"), patch.object(settings, "LOG_LEVEL", "INFO"):
            logger = configure_logging()
        assert isinstance(logging.getLogger().handlers[0].formatter, jsonlogger.JsonFormatter)
        logger.info("fold 2 finished")
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["message"] == "fold 2 finished"
        assert record["levelname"] == "INFO"

    @pytest.mark.unit
    def test_text_format_replaces_handlers(self, capsys):
        with patch.object(settings, "LOG_FORMAT", "text"), patch.object(settings, "LOG_LEVEL", "WARNING"):
            configure_logging()
            configure_logging()
        root = logging.getLogger()
        assert len(root.handlers) == 1
        assert root.level == logging.WARNING
        logging.getLogger("src.test").warning("plateau")
        assert "src.test - WARNING - plateau" in capsys.readouterr().err


class TestExceptions:
    """Exit codes and pickling across worker processes"""

    @pytest.mark.unit
    @pytest.mark.parametrize(
        "error,code",
        [
            (ConfigError("x"), 2),
            (ParameterError("x"), 2),
            (DataError("x"), 3),
            (InputError("x"), 3),
            (StratificationError("x"), 3),
            (CheckpointError("x"), 3),
            (NumericError("x"), 4),
            (DimensionError("x"), 4),
            (ContractError("x"), 4),
            (UndefinedKappaError("x"), 4),
        ],
    )
    def test_exit_codes(self, error, code):
        assert error.exit_code == code

    @pytest.mark.unit
    def test_value_error_compatibility(self):
        assert isinstance(InputError("x"), ValueError)
        assert isinstance(ParameterError("x"), ValueError)

    @pytest.mark.unit
    def test_fold_error_keeps_cause(self):
        error = FoldError(3, NumericError("diverged"))
        assert error.exit_code == 4
        restored = pickle.loads(pickle.dumps(error))
        assert restored.fold == 3
        assert restored.exit_code == 4
        assert "fold 3: diverged" in str(restored)

    @pytest.mark.unit
    def test_missing_checkpoint_pickles(self):
        restored = pickle.loads(pickle.dumps(MissingCheckpointError(1, "run/fold_1/vit.ostg")))
        assert restored.fold == 1
        assert str(restored) == "Missing checkpoint for fold 1: run/fold_1/vit.ostg"


class TestExperimentConfig:
    """The single JSON document driving generate, run and diagnose"""

    @pytest.mark.unit
    def test_defaults_are_consistent(self):
        cfg = ExperimentConfig()
        assert cfg.folds == 4
        assert cfg.vit.num_classes == cfg.synth.num_stages == 10
        assert cfg.ae_training.phase == "ae" and cfg.ae_training.batch_size == 128
        assert cfg.classifier_training.phase == "classifier"
        assert cfg.classifier_training.lr == 1e-4

    @pytest.mark.unit
    def test_seed_propagates(self):
        cfg = ExperimentConfig(seed=42)
        seeds = {
            cfg.synth.seed,
            cfg.ae.seed,
            cfg.vit.seed,
            cfg.ae_training.seed,
            cfg.classifier_training.seed,
        }
        assert seeds == {42}

    @pytest.mark.unit
    def test_partial_sections_keep_phase_defaults(self):
        cfg = ExperimentConfig.model_validate(
            {"ae_training": {"epochs": 3}, "classifier_training": {"epochs": 2}}
        )
        assert (cfg.ae_training.epochs, cfg.ae_training.lr) == (3, 5e-4)
        assert (cfg.classifier_training.epochs, cfg.classifier_training.batch_size) == (2, 64)

    @pytest.mark.unit
    def test_json_round_trip(self):
        cfg = ExperimentConfig(seed=3, use_ae=False, folds=5)
        assert ExperimentConfig.model_validate_json(cfg.model_dump_json()) == cfg

    @pytest.mark.unit
    def test_inconsistent_sizes_rejected(self):
        with pytest.raises(ValidationError, match="image_size"):
            ExperimentConfig.model_validate({"ae": {"image_size": 64}})

    @pytest.mark.unit
    def test_class_count_must_match_stages(self):
        with pytest.raises(ValidationError, match="num_classes"):
            ExperimentConfig.model_validate({"synth": {"num_stages": 4}})

    @pytest.mark.unit
    def test_unknown_keys_rejected(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"epochs": 3})
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"vit": {"depth": 3}})
        with pytest.raises(ValidationError):
            ExperimentConfig.model_validate({"folds": 1})
