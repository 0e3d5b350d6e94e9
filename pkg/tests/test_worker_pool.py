"""
Unit Tests for the worker pool singleton
"""

import os
import sys
import time

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from calculus.worker_pool import WorkerPool, get_worker_pool


@pytest.fixture
def fresh_pool(monkeypatch):
    def make(threads):
        monkeypatch.setenv("OSCULATE_THREADS", threads)
        WorkerPool.reset()
        return get_worker_pool()
    yield make
    WorkerPool.reset()


class TestWorkerPool:
    def test_singleton(self):
        assert get_worker_pool() is get_worker_pool()

    def test_thread_cap_from_environment(self, fresh_pool):
        assert fresh_pool("3").max_workers == 3
        assert fresh_pool("0").max_workers == 1

    def test_bad_thread_cap_falls_back(self, fresh_pool):
        assert fresh_pool("many").max_workers == (os.cpu_count() or 1)

    def test_results_keep_input_order(self, fresh_pool):
        pool = fresh_pool("4")

        def slow_square(n):
            time.sleep(0.001 * (10 - n))
            return n * n

        assert pool.map_ordered(slow_square, range(10)) == [n * n for n in range(10)]

    def test_single_worker_runs_inline(self, fresh_pool):
        pool = fresh_pool("1")
        assert pool.map_ordered(lambda n: n + 1, [1, 2, 3]) == [2, 3, 4]
        assert pool._executor is None


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
