"""
Fold executors - run cross-validation folds serially or in worker processes
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Optional, Sequence

from src.config import settings
from src.logging_config import configure_logging
from src.services.interfaces import FoldExecutorInterface

logger = logging.getLogger(__name__)


class SerialFoldExecutor(FoldExecutorInterface):
    """Runs folds one after another in the current process"""

    @property
    def workers(self) -> int:
        return 1

    def map(self, fn: Callable[[Any], Any], jobs: Sequence[Any]) -> list[Any]:
        return [fn(job) for job in jobs]


class ProcessFoldExecutor(FoldExecutorInterface):
    """Runs folds in a process pool; each fold stays single-threaded"""

    def __init__(self, max_workers: int):
        self._workers = max_workers

    @property
    def workers(self) -> int:
        return self._workers

    def map(self, fn: Callable[[Any], Any], jobs: Sequence[Any]) -> list[Any]:
        logger.info(f"Running {len(jobs)} folds on {self._workers} worker processes")
        with ProcessPoolExecutor(
            max_workers=self._workers, initializer=configure_logging
        ) as pool:
            return list(pool.map(fn, jobs))


# Factory function to get the appropriate executor
def get_fold_executor(num_jobs: Optional[int] = None) -> FoldExecutorInterface:
    """Get a fold executor honouring ORDISTAGE_THREADS"""
    workers = settings.ORDISTAGE_THREADS
    if num_jobs is not None:
        workers = min(workers, num_jobs)
    if workers <= 1:
        return SerialFoldExecutor()
    return ProcessFoldExecutor(workers)
