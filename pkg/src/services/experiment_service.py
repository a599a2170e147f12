"""
Experiment Service - dataset generation, cross-validated training and
diagnostics export

Run directory layout:
    config.json                  the resolved ExperimentConfig
    MANIFEST.status              running / complete / failed plus notes
    metrics.csv                  one row per fold and a "mean (std)" row
    predictions.csv              fold, id, true, predicted
    latent_centroid_distances.csv, latent_intra_distances.csv,
    pca.csv, pca_variance.csv    pooled over all folds     (AE runs)
    fold_<k>/
        split.csv, vit.ostg, vit_curves.csv, ae.ostg, ae_curves.csv
        metrics.csv, predictions.csv, per_stage.csv
        attention/<id>.pgm, attention_layers/<id>_l<l>.pgm
        attention_similarity.csv
        mean_attention/, mean_images/, mean_reconstructions/   stage_<s>.pgm
        latent.csv, pca.csv, pca_variance.csv, latent_centroid_distances.csv,
        latent_intra_distances.csv                             (AE runs)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from src.evaluation.images import mean_stage_image, write_normalized_pgm
from src.evaluation.latent import (
    intra_class_distances,
    latent_centroid_distances,
    mean_off_diagonal,
    pca_project,
)
from src.evaluation.report import (
    FoldMetrics,
    MetricsReport,
    write_frame_csv,
    write_matrix_csv,
    write_vector_csv,
)
from src.evaluation.rollout import (
    attention_rollout,
    attention_similarity_heatmap,
    crown_attention_share,
    mean_attention_map,
    rollout_per_layer,
)
from src.evaluation.metrics import per_stage_summary
from src.exceptions import (
    ConvergenceError,
    DataError,
    FoldError,
    InputError,
    MissingCheckpointError,
    OrdiStageError,
)
from src.losses.reconstruction import PerceptualExtractor
from src.models.autoencoder import ConvAutoencoder, LatentEmbedding
from src.models.checkpoint import load_checkpoint, save_checkpoint
from src.models.vit import VisionTransformer
from src.services.fold_executor import get_fold_executor
from src.services.schemas import ExperimentConfig
from src.synthdata.generator import generate_dataset
from src.synthdata.schemas import StagedDataset
from src.synthdata.storage import load_dataset, save_dataset
from src.training.folds import stratified_folds
from src.training.schemas import FoldSplit
from src.training.trainer import classify, train_autoencoder, train_classifier

logger = logging.getLogger(__name__)

RUN_CONFIG = "config.json"
STATUS_FILE = "MANIFEST.status"
SPLIT_FILE = "split.csv"
AE_CHECKPOINT = "ae.ostg"
VIT_CHECKPOINT = "vit.ostg"
PCA_DIMS = 3


def fold_dir(run_dir: Union[str, Path], fold: int) -> Path:
    return Path(run_dir) / f"fold_{fold}"


def build_extractor(cfg: ExperimentConfig) -> PerceptualExtractor:
    """The frozen feature network shared by the AE loss and the heatmaps"""
    if cfg.perceptual_checkpoint:
        return PerceptualExtractor.from_checkpoint(cfg.perceptual_checkpoint, seed=cfg.seed)
    return PerceptualExtractor(seed=cfg.seed)


def write_status(run_dir: Path, status: str, notes: dict[str, str]) -> Path:
    lines = [f"status={status}"] + [f"{key}={value}" for key, value in notes.items()]
    path = run_dir / STATUS_FILE
    path.write_text("\n".join(lines) + "\n")
    return path


def write_split(split: FoldSplit, path: Path) -> Path:
    rows = [(i, name) for name in ("train", "validation", "test") for i in getattr(split, name)]
    frame = pd.DataFrame(rows, columns=["id", "split"])
    return write_frame_csv(frame, path)


def read_split(path: Path, fold: int) -> FoldSplit:
    if not path.is_file():
        raise DataError(f"Fold {fold}: no {SPLIT_FILE} in {path.parent}")
    frame = pd.read_csv(path, dtype=str)
    groups = {
        name: frame.loc[frame["split"] == name, "id"].tolist()
        for name in ("train", "validation", "test")
    }
    return FoldSplit(fold=fold, **groups)


def write_pca(usable: list[LatentEmbedding], out: Path, seed: int, label: str) -> dict[str, str]:
    """Write pca.csv and pca_variance.csv; a failed projection becomes a status note"""
    try:
        pca = pca_project(usable, dims=PCA_DIMS, seed=seed)
    except (ConvergenceError, InputError) as e:
        logger.warning(f"{label}: PCA skipped: {e}")
        return {f"{label}_pca": f"skipped ({type(e).__name__})"}
    components = [f"pc{i + 1}" for i in range(pca.projections.shape[1])]
    frame = pd.DataFrame(pca.projections, columns=components)
    frame.insert(0, "stage", [e.stage for e in usable])
    frame.insert(0, "id", [e.sample_id for e in usable])
    write_frame_csv(frame, out / "pca.csv")
    write_frame_csv(
        pd.DataFrame(
            {
                "component": [f"pc{i + 1}" for i in range(len(pca.eigenvalues))],
                "eigenvalue": pca.eigenvalues,
                "explained": pca.explained,
            }
        ),
        out / "pca_variance.csv",
    )
    return {}


@dataclass
class FoldJob:
    """Everything a worker process needs to train one fold"""

    split: FoldSplit
    config_json: str
    run_dir: str


def train_fold(job: FoldJob) -> int:
    """
    Train the optional autoencoder and the classifier of one fold and store
    checkpoints and loss curves in its fold directory.

    Module-level so that it can be shipped to worker processes.
    """
    fold = job.split.fold
    try:
        cfg = ExperimentConfig.model_validate_json(job.config_json)
        dataset = load_dataset(cfg.dataset_dir, cfg.synth.num_stages)
        out = fold_dir(job.run_dir, fold)
        out.mkdir(parents=True, exist_ok=True)
        write_split(job.split, out / SPLIT_FILE)
        augment = cfg.augment if cfg.use_augmentation else None

        logger.info(f"Fold {fold}: starting ({'AE+ViT' if cfg.use_ae else 'ViT-only'})")
        ae_model: Optional[ConvAutoencoder] = None
        if cfg.use_ae:
            ae_model, ae_result = train_autoencoder(
                dataset, job.split, cfg.ae_training, cfg.ae, augment, build_extractor(cfg)
            )
            save_checkpoint(ae_result.state, out / AE_CHECKPOINT)
            write_frame_csv(ae_result.curves_frame(), out / "ae_curves.csv")

        _, vit_result = train_classifier(
            dataset, job.split, cfg.classifier_training, cfg.vit, ae_model, augment
        )
        save_checkpoint(vit_result.state, out / VIT_CHECKPOINT)
        write_frame_csv(vit_result.curves_frame(), out / "vit_curves.csv")
        logger.info(f"Fold {fold}: training complete")
        return fold
    except OrdiStageError as e:
        logger.error(f"Fold {fold} failed: {e}")
        raise FoldError(fold, e) from e


@dataclass
class FoldDiagnostics:
    """In-memory results of diagnosing one fold"""

    metrics: FoldMetrics
    predictions: pd.DataFrame
    embeddings: list[LatentEmbedding] = field(default_factory=list)
    notes: dict[str, str] = field(default_factory=dict)


class ExperimentService:
    """Orchestrates generate, run and diagnose over a run directory"""

    def generate(self, cfg: ExperimentConfig, output: Optional[str] = None) -> Path:
        """Render the synthetic dataset into output (default cfg.dataset_dir)"""
        directory = Path(output or cfg.dataset_dir)
        dataset = generate_dataset(cfg.synth)
        save_dataset(dataset, directory)
        counts = np.bincount([s.stage for s in dataset], minlength=cfg.synth.num_stages)
        logger.info(f"Generated {len(dataset)} samples, per stage {counts.tolist()}")
        return directory

    def run(self, cfg: ExperimentConfig) -> Path:
        """Cross-validated training of every fold followed by diagnose()"""
        run_dir = Path(cfg.output_dir)
        dataset = load_dataset(cfg.dataset_dir, cfg.synth.num_stages)
        splits = stratified_folds(list(dataset), k=cfg.folds, seed=cfg.seed)

        try:
            run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DataError(f"Cannot create run directory {run_dir}: {e}") from e
        (run_dir / RUN_CONFIG).write_text(cfg.model_dump_json(indent=2) + "\n")
        write_status(run_dir, "running", {"folds": str(cfg.folds)})

        config_json = cfg.model_dump_json()
        jobs = [FoldJob(split=s, config_json=config_json, run_dir=str(run_dir)) for s in splits]
        executor = get_fold_executor(len(jobs))
        logger.info(f"Running {len(jobs)} folds with {executor.workers} worker(s) into {run_dir}")
        try:
            executor.map(train_fold, jobs)
        except FoldError as e:
            write_status(run_dir, "failed", {"folds": str(cfg.folds), "failed_fold": str(e.fold)})
            raise
        except Exception as e:
            logger.error(f"Run aborted: {type(e).__name__}: {e}")
            write_status(run_dir, "failed", {"folds": str(cfg.folds), "error": type(e).__name__})
            raise

        self.diagnose(run_dir)
        return run_dir

    def diagnose(self, run_dir: Union[str, Path]) -> MetricsReport:
        """Recompute every metric and diagnostic file from stored checkpoints"""
        run_dir = Path(run_dir)
        config_path = run_dir / RUN_CONFIG
        if not config_path.is_file():
            raise DataError(f"{run_dir} is not a run directory (no {RUN_CONFIG})")
        cfg = ExperimentConfig.model_validate_json(config_path.read_text())

        for k in range(cfg.folds):
            names = [VIT_CHECKPOINT] + ([AE_CHECKPOINT] if cfg.use_ae else [])
            for name in names:
                path = fold_dir(run_dir, k) / name
                if not path.is_file():
                    raise MissingCheckpointError(k, str(path))

        dataset = load_dataset(cfg.dataset_dir, cfg.synth.num_stages)
        extractor = build_extractor(cfg)
        notes: dict[str, str] = {
            "folds": str(cfg.folds),
            "use_ae": str(cfg.use_ae).lower(),
            "latent_outputs": "present" if cfg.use_ae else "absent (ViT-only run)",
        }
        report = MetricsReport()
        predictions: list[pd.DataFrame] = []
        pooled: list[LatentEmbedding] = []
        try:
            for k in range(cfg.folds):
                try:
                    result = self.diagnose_fold(cfg, dataset, run_dir, k, extractor)
                except OrdiStageError as e:
                    logger.error(f"Fold {k} diagnostics failed: {e}")
                    raise FoldError(k, e) from e
                report.folds.append(result.metrics)
                predictions.append(result.predictions)
                pooled.extend(result.embeddings)
                notes.update(result.notes)
                notes[f"fold_{k}"] = "ok"
        except FoldError as e:
            notes["failed_fold"] = str(e.fold)
            write_status(run_dir, "failed", notes)
            raise

        report.write_csv(run_dir / "metrics.csv")
        write_frame_csv(pd.concat(predictions, ignore_index=True), run_dir / "predictions.csv")
        if cfg.use_ae and pooled:
            num_stages = cfg.synth.num_stages
            report.centroid_distances = latent_centroid_distances(pooled, num_stages)
            report.intra_distances = intra_class_distances(pooled, num_stages)
            write_matrix_csv(report.centroid_distances, run_dir / "latent_centroid_distances.csv")
            write_vector_csv(report.intra_distances, run_dir / "latent_intra_distances.csv", "intra_distance")
            notes["mean_inter_distance"] = f"{mean_off_diagonal(report.centroid_distances):.6f}"
            notes["mean_intra_distance"] = f"{np.nanmean(report.intra_distances):.6f}"
            usable = [e for e in pooled if not e.degenerate]
            if usable:
                notes.update(write_pca(usable, run_dir, cfg.seed, "pooled"))

        write_status(run_dir, "complete", notes)
        summary = report.summary()
        logger.info(
            f"Diagnostics complete: accuracy {summary['accuracy']}, "
            f"kappa_w {summary['kappa_w']}, mae {summary['mae']}"
        )
        return report

    def diagnose_fold(
        self,
        cfg: ExperimentConfig,
        dataset: StagedDataset,
        run_dir: Path,
        fold: int,
        extractor: PerceptualExtractor,
    ) -> FoldDiagnostics:
        out = fold_dir(run_dir, fold)
        split = read_split(out / SPLIT_FILE, fold)
        num_stages = cfg.synth.num_stages
        test_ids = split.test
        images = dataset.images(test_ids)
        true = dataset.stages(test_ids)

        ae_model: Optional[ConvAutoencoder] = None
        if cfg.use_ae:
            ae_model = ConvAutoencoder(cfg.ae)
            ae_model.load_state_dict(load_checkpoint(out / AE_CHECKPOINT, fold))
            ae_model.freeze().eval()
        vit = VisionTransformer(cfg.vit)
        vit.load_state_dict(load_checkpoint(out / VIT_CHECKPOINT, fold))

        predicted, _, records = classify(vit, images, ae_model, cfg.classifier_training.batch_size)
        metrics = FoldMetrics.evaluate(fold, true.tolist(), predicted.tolist(), num_stages)
        MetricsReport(folds=[metrics]).write_csv(out / "metrics.csv")
        predictions = pd.DataFrame(
            {"fold": fold, "id": test_ids, "true": true, "predicted": predicted},
            columns=["fold", "id", "true", "predicted"],
        )
        write_frame_csv(predictions.drop(columns="fold"), out / "predictions.csv")

        maps = []
        for sample_id, rec in zip(test_ids, records):
            attention = attention_rollout(rec, cfg.vit.image_size)
            maps.append(attention)
            write_normalized_pgm(attention.render(), out / "attention" / f"{sample_id}.pgm")
            for layer, layer_map in enumerate(rollout_per_layer(rec, cfg.vit.image_size), start=1):
                write_normalized_pgm(
                    layer_map.render(), out / "attention_layers" / f"{sample_id}_l{layer}.pgm"
                )

        shares = [crown_attention_share(m) for m in maps]
        write_frame_csv(
            per_stage_summary(true, predicted, num_stages, shares), out / "per_stage.csv"
        )
        similarity, order = attention_similarity_heatmap(maps, extractor, true)
        write_matrix_csv(
            similarity, out / "attention_similarity.csv", labels=[test_ids[i] for i in order], corner="id"
        )

        reconstructions = ae_model.reconstruct(images) if ae_model is not None else None
        for stage in sorted(set(true.tolist())):
            stage_maps = [m for m, s in zip(maps, true) if s == stage]
            write_normalized_pgm(
                mean_attention_map(stage_maps).render(), out / "mean_attention" / f"stage_{stage}.pgm"
            )
            write_normalized_pgm(
                mean_stage_image(images, true, stage), out / "mean_images" / f"stage_{stage}.pgm"
            )
            if reconstructions is not None:
                write_normalized_pgm(
                    mean_stage_image(reconstructions, true, stage),
                    out / "mean_reconstructions" / f"stage_{stage}.pgm",
                )

        result = FoldDiagnostics(metrics=metrics, predictions=predictions)
        if ae_model is not None:
            result.embeddings = ae_model.embed(images, true.tolist(), test_ids)
            result.notes.update(self._latent_outputs(result.embeddings, out, fold, num_stages, cfg.seed))
        logger.info(
            f"Fold {fold}: accuracy {metrics.accuracy:.4f}, kappa_w {metrics.kappa_w}, "
            f"mae {metrics.mae:.4f}"
        )
        return result

    def _latent_outputs(
        self,
        embeddings: list[LatentEmbedding],
        out: Path,
        fold: int,
        num_stages: int,
        seed: int,
    ) -> dict[str, str]:
        notes: dict[str, str] = {}
        usable = [e for e in embeddings if not e.degenerate]
        skipped = len(embeddings) - len(usable)
        if skipped:
            logger.warning(f"Fold {fold}: {skipped} degenerate embeddings excluded")
            notes[f"fold_{fold}_degenerate_embeddings"] = str(skipped)

        dim = embeddings[0].z.size if embeddings else 0
        latent = pd.DataFrame(
            [[e.sample_id, e.stage, *e.z] for e in embeddings],
            columns=["id", "stage"] + [f"z{i}" for i in range(dim)],
        )
        write_frame_csv(latent, out / "latent.csv")
        if not usable:
            notes[f"fold_{fold}_latent"] = "no usable embeddings"
            return notes

        write_matrix_csv(
            latent_centroid_distances(usable, num_stages), out / "latent_centroid_distances.csv"
        )
        write_vector_csv(
            intra_class_distances(usable, num_stages), out / "latent_intra_distances.csv", "intra_distance"
        )
        notes.update(write_pca(usable, out, seed, f"fold_{fold}"))
        return notes


_experiment_service: Optional[ExperimentService] = None


# Factory function to get the experiment service
def get_experiment_service() -> ExperimentService:
    global _experiment_service
    if _experiment_service is None:
        _experiment_service = ExperimentService()
    return _experiment_service
