"""
Relic Sketch - Batch Runner
Fans per-image work out to worker threads and merges results in input order
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Generic, List, Optional, Sequence, TypeVar

from relic_sketch.errors import DataError, RelicSketchError
from relic_sketch.settings import thread_limit

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class Outcome(Generic[R]):
    index: int
    label: str
    value: Optional[R] = None
    error: Optional[BaseException] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class BatchRunner:
    """
    Bounded thread fan-out:
    - at most `limit` jobs run at once (RELIC_SKETCH_THREADS by default)
    - every job's outcome is kept, failures included
    - outcomes come back in the order the items were given
    """

    def __init__(self, limit: Optional[int] = None):
        self.limit = limit or thread_limit()
        self.completed = 0
        self.failed = 0

    async def _run_one(self, semaphore: asyncio.Semaphore, index: int, label: str,
                       job: Callable[[T], R], item: T) -> Outcome[R]:
        async with semaphore:
            try:
                value = await asyncio.to_thread(job, item)
            except Exception as e:
                self.failed += 1
                if isinstance(e, RelicSketchError):
                    logger.error(f"❌ {label}: {e}")
                else:
                    logger.exception(f"❌ {label}: unexpected failure")
                return Outcome(index, label, error=e)
            self.completed += 1
            return Outcome(index, label, value=value)

    async def run(self, items: Sequence[T], job: Callable[[T], R],
                  labels: Optional[Sequence[str]] = None) -> List[Outcome[R]]:
        labels = list(labels) if labels is not None else [f"item {i}" for i in range(len(items))]
        semaphore = asyncio.Semaphore(self.limit)
        tasks = [self._run_one(semaphore, i, labels[i], job, item) for i, item in enumerate(items)]
        outcomes = await asyncio.gather(*tasks)
        logger.info(f"📊 Batch finished: {sum(o.ok for o in outcomes)}/{len(outcomes)} succeeded "
                    f"({self.limit} workers)")
        return list(outcomes)

    async def run_all(self, items: Sequence[T], job: Callable[[T], R],
                      labels: Optional[Sequence[str]] = None) -> List[R]:
        """Like run(), but fails with DataError naming every failed item"""
        outcomes = await self.run(items, job, labels)
        failures = [o for o in outcomes if not o.ok]
        if failures:
            names = ", ".join(o.label for o in failures[:10])
            raise DataError(f"{len(failures)} of {len(outcomes)} items failed: {names}")
        return [o.value for o in outcomes]

    def get_stats(self) -> Dict[str, Any]:
        return {"limit": self.limit, "completed": self.completed, "failed": self.failed}
