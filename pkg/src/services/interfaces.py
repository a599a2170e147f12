from abc import ABC, abstractmethod
from typing import Any, Callable, Sequence


class FoldExecutorInterface(ABC):
    """Abstract interface for running independent fold jobs"""

    @abstractmethod
    def map(self, fn: Callable[[Any], Any], jobs: Sequence[Any]) -> list[Any]:
        """Run fn over jobs and return results in job order"""
        pass

    @property
    @abstractmethod
    def workers(self) -> int:
        """Number of folds that may run at the same time"""
        pass
