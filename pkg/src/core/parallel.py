#!/usr/bin/env python3
"""
Ограничение внутреннего параллелизма и разбиение растров на полосы строк.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple

import psutil
import structlog

logger = structlog.get_logger(__name__)

_THREADS: Optional[int] = None


def default_threads() -> int:
    env = os.environ.get("SPATIALGEN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            logger.warning("parallel.bad_env_threads", value=env)
    return max(1, psutil.cpu_count(logical=True) or 1)


def set_threads(threads: Optional[int]) -> int:
    """Фиксирует глобальный лимит потоков (None → значение по умолчанию)."""
    global _THREADS
    _THREADS = max(1, int(threads)) if threads else default_threads()
    try:
        import torch

        torch.set_num_threads(_THREADS)
    except Exception as exc:  # pragma: no cover
        logger.warning("parallel.torch_threads_failed", error=str(exc))
    return _THREADS


def get_threads() -> int:
    return _THREADS if _THREADS is not None else default_threads()


def row_bands(height: int, threads: Optional[int] = None) -> List[Tuple[int, int]]:
    """Делит [0, height) на непересекающиеся полосы строк."""
    workers = max(1, min(threads or get_threads(), height))
    step = -(-height // workers)
    return [(start, min(start + step, height)) for start in range(0, height, step)]


def run_bands(height: int, fn: Callable[[int, int], None], threads: Optional[int] = None) -> None:
    """
    Выполняет fn(row_start, row_end) по полосам. Полосы пишут в разные строки,
    поэтому результат не зависит от числа потоков.
    """
    bands = row_bands(height, threads)
    if len(bands) == 1:
        fn(*bands[0])
        return
    with ThreadPoolExecutor(max_workers=len(bands)) as pool:
        futures = [pool.submit(fn, start, end) for start, end in bands]
        for future in futures:
            future.result()
