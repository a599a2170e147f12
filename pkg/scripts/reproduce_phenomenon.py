#!/usr/bin/env python3
"""
Desk-scale comparison of compact (LOWVAR) and broad (HIGHVAR) staging data.

Runs 4-fold AE+ViT on both presets plus a ViT-only baseline on HIGHVAR, then
prints the accuracy gap, the latent separability numbers and the per-fold
AE benefit. Exits 1 when one of the expected orderings does not hold.

    python scripts/reproduce_phenomenon.py --output runs/phenomenon [--epochs 60]
"""

import argparse
import logging
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.evaluation.report import MetricsReport  # noqa: E402
from src.exceptions import OrdiStageError  # noqa: E402
from src.logging_config import configure_logging  # noqa: E402
from src.services.experiment_service import STATUS_FILE, get_experiment_service  # noqa: E402
from src.services.schemas import ExperimentConfig  # noqa: E402
from src.synthdata.schemas import PRESETS  # noqa: E402

logger = logging.getLogger("reproduce_phenomenon")

MIN_ACCURACY_GAP = 0.15
MIN_AE_WINS = 3


def experiment(preset: str, root: Path, epochs: int, seed: int, use_ae: bool) -> ExperimentConfig:
    name = f"{preset.lower()}_{'ae_vit' if use_ae else 'vit_only'}"
    return ExperimentConfig.model_validate(
        {
            "synth": {"image_size": 32, "num_stages": 10, "samples_per_stage": 20, **PRESETS[preset]},
            "ae": {"image_size": 32, "base_channels": 8, "num_blocks": 3, "latent_dim": 16},
            "vit": {"image_size": 32, "patch_size": 8, "embed_dim": 64, "num_heads": 2, "num_layers": 2},
            "ae_training": {"epochs": epochs, "batch_size": 32},
            "classifier_training": {"epochs": epochs, "batch_size": 32},
            "use_ae": use_ae,
            "folds": 4,
            "seed": seed,
            "dataset_dir": str(root / "data" / preset.lower()),
            "output_dir": str(root / name),
        }
    )


def read_notes(run_dir: Path) -> dict[str, str]:
    lines = (run_dir / STATUS_FILE).read_text().splitlines()
    return dict(line.split("=", 1) for line in lines if "=" in line)


def mean_accuracy(run_dir: Path) -> tuple[float, list[float]]:
    folds = MetricsReport.read_folds(run_dir / "metrics.csv")
    accuracies = [f.accuracy for f in folds]
    return sum(accuracies) / len(accuracies), accuracies


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--output", default="runs/phenomenon", help="Root directory for datasets and runs")
    parser.add_argument("--epochs", type=int, default=60, help="Epochs per training phase")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    configure_logging()
    root = Path(args.output)
    service = get_experiment_service()

    runs = {}
    try:
        for preset, use_ae in (("LOWVAR", True), ("HIGHVAR", True), ("HIGHVAR", False)):
            cfg = experiment(preset, root, args.epochs, args.seed, use_ae)
            if not (Path(cfg.dataset_dir) / "manifest.csv").is_file():
                service.generate(cfg)
            logger.info(f"Running {preset} ({'AE+ViT' if use_ae else 'ViT-only'})")
            runs[(preset, use_ae)] = service.run(cfg)
    except OrdiStageError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    low_acc, _ = mean_accuracy(runs[("LOWVAR", True)])
    high_acc, high_folds = mean_accuracy(runs[("HIGHVAR", True)])
    _, baseline_folds = mean_accuracy(runs[("HIGHVAR", False)])
    low_notes = read_notes(runs[("LOWVAR", True)])
    high_notes = read_notes(runs[("HIGHVAR", True)])
    low_intra, high_intra = float(low_notes["mean_intra_distance"]), float(high_notes["mean_intra_distance"])
    low_inter, high_inter = float(low_notes["mean_inter_distance"]), float(high_notes["mean_inter_distance"])
    ae_wins = sum(a >= b for a, b in zip(high_folds, baseline_folds))

    checks = [
        (f"accuracy gap LOWVAR - HIGHVAR = {low_acc:.4f} - {high_acc:.4f} = {low_acc - high_acc:.4f}",
         low_acc - high_acc >= MIN_ACCURACY_GAP),
        (f"mean intra-class distance LOWVAR {low_intra:.4f} < HIGHVAR {high_intra:.4f}",
         low_intra < high_intra),
        (f"mean inter-class distance LOWVAR {low_inter:.4f} > HIGHVAR {high_inter:.4f}",
         low_inter > high_inter),
        (f"HIGHVAR folds where AE+ViT >= ViT-only: {ae_wins}/{len(high_folds)}",
         ae_wins >= MIN_AE_WINS),
    ]
    for text, passed in checks:
        print(f"[{'ok' if passed else 'FAIL'}] {text}")
    return 0 if all(passed for _, passed in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
