"""
Dataset directories: manifest.csv (id, stage, sex, filename) and PGM images
"""

import logging
from pathlib import Path
from typing import Union

import pandas as pd

from src.evaluation.images import read_pgm, write_pgm
from src.exceptions import DataError
from src.synthdata.schemas import StagedDataset, StagedSample

logger = logging.getLogger(__name__)

MANIFEST = "manifest.csv"
IMAGE_DIR = "images"
MANIFEST_COLUMNS = ["id", "stage", "sex", "filename"]


def save_dataset(dataset: StagedDataset, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    try:
        (directory / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create dataset directory {directory}: {e}") from e

    rows = []
    for sample in dataset:
        filename = f"{IMAGE_DIR}/{sample.sample_id}.pgm"
        write_pgm(sample.image, directory / filename)
        rows.append(
            {
                "id": sample.sample_id,
                "stage": sample.stage,
                "sex": sample.sex,
                "filename": filename,
            }
        )
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(directory / MANIFEST, index=False)
    logger.info(f"Wrote {len(rows)} images and {MANIFEST} to {directory}")
    return directory


def load_dataset(directory: Union[str, Path], num_stages: int = 10) -> StagedDataset:
    """Load a manifest+PGM directory (generated or external)"""
    directory = Path(directory)
    manifest = directory / MANIFEST
    if not manifest.is_file():
        raise DataError(f"No {MANIFEST} in {directory}")
    frame = pd.read_csv(manifest, dtype={"id": str, "sex": str, "filename": str})
    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{manifest} lacks columns {missing}")

    samples = [
        StagedSample(
            image=read_pgm(directory / row.filename),
            stage=int(row.stage),
            sex=row.sex,
            sample_id=row.id,
        )
        for row in frame.itertuples(index=False)
    ]
    logger.info(f"Loaded {len(samples)} samples from {directory}")
    return StagedDataset(samples=samples, num_stages=num_stages)
