from concurrent.futures import ThreadPoolExecutor
import logging
from typing import Callable, Iterable, List, Optional, TypeVar

from .settings import worker_threads

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(func: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> List[R]:
    """
    Applies `func` to every item and returns the results in input order.

    Rows run sequentially with one worker (the default); with more workers
    they run in a thread pool and are merged back in input order, so the
    emitted tables do not depend on scheduling.
    """
    items = list(items)
    workers = max_workers if max_workers is not None else worker_threads()
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    logger.debug(f"Esecuzione parallela di {len(items)} righe con {workers} worker.")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
