"""
Stage x sex stratified k-fold splits with a per-fold validation draw
"""

import logging
from collections import defaultdict
from typing import Sequence

import numpy as np

from src.exceptions import ParameterError, StratificationError
from src.training.schemas import FoldSplit

logger = logging.getLogger(__name__)

SEX_CODES = {"A": 0, "B": 1}


def stratified_folds(
    samples: Sequence,
    k: int = 4,
    seed: int = 0,
    validation_fraction: float = 0.1,
) -> list[FoldSplit]:
    """
    Partition samples into k stratified test folds.

    Each (stage, sex) cell is shuffled with a seed derived from the cell, then
    dealt round-robin onto the k test folds. For every fold, round(cell size *
    validation_fraction) samples per cell are drawn from the non-test
    remainder as validation; the rest is training data. Splits depend only on
    sample ids, not on input order.

    Args:
        samples: Objects with sample_id, stage and sex attributes.
        k: Number of folds, at least 2.
        seed: Seed for the shuffles.
        validation_fraction: Share of the full dataset used for validation.

    Raises:
        ParameterError: k < 2.
        StratificationError: A stage x sex cell holds fewer than k samples.
    """
    if k < 2:
        raise ParameterError(f"k must be at least 2 for held-out rotation, got {k}")

    cells: dict[tuple[int, str], list[str]] = defaultdict(list)
    for sample in samples:
        cells[(int(sample.stage), str(sample.sex))].append(sample.sample_id)

    test_sets: list[list[str]] = [[] for _ in range(k)]
    shuffled: dict[tuple[int, str], list[str]] = {}
    for offset, cell in enumerate(sorted(cells)):
        stage, sex = cell
        ids = sorted(cells[cell])
        if len(ids) < k:
            raise StratificationError(
                f"Cell stage={stage} sex={sex} has {len(ids)} samples, needs at least {k}"
            )
        order = np.random.default_rng([seed, stage, SEX_CODES.get(sex, 2)]).permutation(
            len(ids)
        )
        shuffled[cell] = [ids[i] for i in order]
        # Rotate the starting fold so remainders spread evenly across folds
        for position, sample_id in enumerate(shuffled[cell]):
            test_sets[(position + offset) % k].append(sample_id)

    splits = []
    for fold in range(k):
        test = set(test_sets[fold])
        validation: list[str] = []
        train: list[str] = []
        for cell in sorted(shuffled):
            stage, sex = cell
            remainder = [i for i in shuffled[cell] if i not in test]
            n_val = int(np.floor(len(shuffled[cell]) * validation_fraction + 0.5))
            n_val = min(n_val, len(remainder) - 1) if len(remainder) > 1 else 0
            rng = np.random.default_rng([seed, fold, stage, SEX_CODES.get(sex, 2), 1])
            picked = set(rng.choice(len(remainder), size=n_val, replace=False).tolist())
            for position, sample_id in enumerate(remainder):
                (validation if position in picked else train).append(sample_id)
        splits.append(
            FoldSplit(
                fold=fold,
                train=sorted(train),
                validation=sorted(validation),
                test=sorted(test_sets[fold]),
            )
        )
        logger.debug(
            f"Fold {fold}: {len(train)} train, {len(validation)} validation, "
            f"{len(test_sets[fold])} test"
        )
    return splits
