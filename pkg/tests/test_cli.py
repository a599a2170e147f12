"""
Command-line surface: argument handling and exit codes
"""

import json
from unittest.mock import MagicMock, patch

import pytest

from src.cli import build_parser, load_config, main
from src.evaluation.report import MetricsReport
from src.exceptions import ConfigError, ConvergenceError, DataError, FoldError, NumericError


@pytest.fixture(autouse=True)
def quiet_logging():
    with patch("src.cli.configure_logging"):
        yield


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "synth": {"image_size": 16, "num_stages": 3, "samples_per_stage": 4},
                "ae": {"image_size": 16, "num_blocks": 2},
                "vit": {"image_size": 16, "num_classes": 3},
                "dataset_dir": str(tmp_path / "data"),
                "output_dir": str(tmp_path / "run"),
            }
        )
    )
    return path


@pytest.fixture
def mock_service():
    service = MagicMock()
    with patch("src.cli.get_experiment_service", return_value=service):
        yield service


@pytest.mark.unit
def test_print_config_uses_defaults(capsys):
    assert main(["run", "--print-config"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["folds"] == 4
    assert printed["classifier_training"]["lr"] == 1e-4


@pytest.mark.unit
def test_seed_override_reaches_subconfigs(capsys, config_file):
    assert main(["run", "--config", str(config_file), "--seed", "9", "--print-config"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["seed"] == 9
    assert printed["synth"]["seed"] == 9
    assert printed["ae_training"]["seed"] == 9


@pytest.mark.unit
def test_generate(config_file, tmp_path, capsys):
    assert main(["generate", "--config", str(config_file)]) == 0
    assert (tmp_path / "data" / "manifest.csv").is_file()
    assert "Wrote 12 images" in capsys.readouterr().out

    assert main(["generate", "--config", str(config_file), "--output", str(tmp_path / "other")]) == 0
    assert (tmp_path / "other" / "manifest.csv").is_file()


@pytest.mark.unit
def test_run_output_override(config_file, tmp_path, mock_service):
    mock_service.run.return_value = tmp_path / "custom"
    assert main(["run", "--config", str(config_file), "--output", str(tmp_path / "custom")]) == 0
    cfg = mock_service.run.call_args.args[0]
    assert cfg.output_dir == str(tmp_path / "custom")


@pytest.mark.unit
def test_diagnose_defaults_to_config_output(config_file, tmp_path, mock_service):
    mock_service.diagnose.return_value = MetricsReport()
    assert main(["diagnose", "--config", str(config_file)]) == 0
    assert str(mock_service.diagnose.call_args.args[0]) == str(tmp_path / "run")


class TestExitCodes:
    """0 success, 2 config, 3 data, 4 numeric"""

    @pytest.mark.unit
    def test_missing_config_argument(self, capsys):
        assert main(["run"]) == 2
        assert "requires --config" in capsys.readouterr().err

    @pytest.mark.unit
    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{ not json")
        assert main(["run", "--config", str(bad)]) == 2

    @pytest.mark.unit
    def test_unknown_key(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"learning_rate": 0.1}))
        assert main(["generate", "--config", str(bad)]) == 2

    @pytest.mark.unit
    def test_unreadable_config(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "absent.json")]) == 2

    @pytest.mark.unit
    def test_diagnose_outside_run_directory(self, tmp_path, capsys):
        assert main(["diagnose", "--output", str(tmp_path)]) == 3
        assert capsys.readouterr().err.startswith("error: ")

    @pytest.mark.unit
    def test_numeric_failure(self, config_file, mock_service):
        mock_service.run.side_effect = ConvergenceError("power iteration stalled", 0.5)
        assert main(["run", "--config", str(config_file)]) == 4

    @pytest.mark.unit
    def test_fold_failure_keeps_cause_code(self, config_file, mock_service):
        mock_service.run.side_effect = FoldError(0, NumericError("non-finite gradient"))
        assert main(["run", "--config", str(config_file)]) == 4
        mock_service.run.side_effect = FoldError(1, DataError("missing image"))
        assert main(["run", "--config", str(config_file)]) == 3

    @pytest.mark.unit
    def test_unknown_command(self):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["train"])
        assert info.value.code == 2


@pytest.mark.unit
def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    assert load_config(None, seed=4).seed == 4
