"""Order-preserving worker pool for independent sweep cells and trajectories."""
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(threads: Optional[int] = None) -> int:
    """--threads, else UBMOT_THREADS, else the number of usable cores."""
    if threads is None:
        env = os.getenv("UBMOT_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_cells(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None, desc: Optional[str] = None) -> List[R]:
    """
    Apply fn to every item, in parallel when threads > 1.

    Results come back in input order, so any reduction over them is the same
    for every thread count. fn must be picklable (a module-level function or
    a functools.partial of one).
    """
    items = list(items)
    threads = min(resolve_threads(threads), max(1, len(items)))
    show = desc is not None and sys.stderr.isatty()
    if threads == 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not show)]

    chunksize = max(1, len(items) // (threads * 10))
    logger.debug(f"running {len(items)} cells on {threads} workers (chunksize {chunksize})")
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(tqdm(pool.map(fn, items, chunksize=chunksize), total=len(items), desc=desc, disable=not show))
