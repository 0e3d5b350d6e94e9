"""
Worker Pool - Singleton thread pool for independent slice computations

Per-slice and per-shell work is independent; results are always returned in
submission order so every reduction done by the caller has a fixed order and
outputs stay bit-identical regardless of scheduling.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def _thread_cap() -> int:
    """Worker count from OSCULATE_THREADS, defaulting to the CPU count."""
    raw = os.getenv("OSCULATE_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer OSCULATE_THREADS=%r", raw)
        return os.cpu_count() or 1
    return max(1, value)


class WorkerPool:
    """
    Singleton pool shared by the numeric layer.

    Created once per process; `reset()` exists for tests that change the
    environment cap.
    """

    _instance: Optional["WorkerPool"] = None
    _initialized: bool = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if WorkerPool._initialized:
            return
        self.max_workers = _thread_cap()
        self._executor: Optional[ThreadPoolExecutor] = None
        logger.debug("worker pool created with %d workers", self.max_workers)
        WorkerPool._initialized = True

    def _get_executor(self) -> ThreadPoolExecutor:
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.max_workers)
        return self._executor

    def map_ordered(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """
        Apply fn to every item and return results in input order.

        Runs inline when only one worker is allowed or there is a single item.
        """
        items = list(items)
        if self.max_workers == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        return list(self._get_executor().map(fn, items))

    def shutdown(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    @classmethod
    def reset(cls) -> None:
        """Drop the singleton so the next access re-reads OSCULATE_THREADS."""
        if cls._instance is not None:
            cls._instance.shutdown()
        cls._instance = None
        cls._initialized = False


def get_worker_pool() -> WorkerPool:
    """Get the process-wide worker pool."""
    return WorkerPool()
