"""
Command-line entry point

    python -m src.cli generate --config cfg.json [--output DIR] [--seed N]
    python -m src.cli run      --config cfg.json [--output DIR] [--seed N]
    python -m src.cli diagnose [--config cfg.json] [--output RUN_DIR]
    python -m src.cli run --print-config

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from src.exceptions import ConfigError, OrdiStageError
from src.logging_config import configure_logging
from src.services.experiment_service import get_experiment_service
from src.services.schemas import ExperimentConfig

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "run", "diagnose")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ordistage",
        description="Ordinal staging experiments: synthetic data, AE+ViT training, diagnostics",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="Experiment configuration JSON")
    parser.add_argument(
        "--output",
        help="Dataset directory (generate) or run directory (run, diagnose)",
    )
    parser.add_argument("--seed", type=int, help="Override the configuration seed")
    parser.add_argument(
        "--print-config",
        action="store_true",
        help="Print the resolved configuration with all defaults and exit",
    )
    return parser


def load_config(path: Optional[str], seed: Optional[int] = None) -> ExperimentConfig:
    """Read and validate a configuration file; no path means all defaults"""
    try:
        if path is None:
            cfg = ExperimentConfig()
        else:
            cfg = ExperimentConfig.model_validate_json(Path(path).read_text())
        if seed is not None:
            cfg = ExperimentConfig.model_validate({**cfg.model_dump(), "seed": seed})
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e
    return cfg


def cmd_generate(cfg: ExperimentConfig, output: Optional[str] = None) -> Path:
    directory = get_experiment_service().generate(cfg, output)
    print(f"Wrote {cfg.synth.num_stages * cfg.synth.samples_per_stage} images to {directory}")
    return directory


def cmd_run(cfg: ExperimentConfig, output: Optional[str] = None) -> Path:
    if output:
        cfg = cfg.model_copy(update={"output_dir": output})
    run_dir = get_experiment_service().run(cfg)
    print(f"Run complete: {run_dir}")
    return run_dir


def cmd_diagnose(cfg: ExperimentConfig, output: Optional[str] = None) -> Path:
    run_dir = Path(output or cfg.output_dir)
    report = get_experiment_service().diagnose(run_dir)
    print(f"Diagnostics refreshed in {run_dir}: {report.summary()}")
    return run_dir


HANDLERS = {"generate": cmd_generate, "run": cmd_run, "diagnose": cmd_diagnose}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()

    try:
        if args.command != "diagnose" and args.config is None and not args.print_config:
            raise ConfigError(f"{args.command} requires --config")
        cfg = load_config(args.config, args.seed)
        if args.print_config:
            print(cfg.model_dump_json(indent=2))
            return 0
        HANDLERS[args.command](cfg, args.output)
    except OrdiStageError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
