"""Thread-pool dispatch of independent path ranges."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .errors import DomainError

__all__ = ["THREADS_ENV", "resolve_threads", "run_ranges"]

THREADS_ENV = "FOLDNOISE_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Thread count: the environment variable wins, then the argument, then the CPU count."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError as exc:
            raise DomainError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise DomainError("thread count must be positive")
    return threads


def run_ranges(n: int, chunk: int, work, threads: int | None = None) -> None:
    """Call ``work(start, stop)`` over ``[0, n)`` in chunks, possibly concurrently.

    ``work`` must write only to the slots of its own range.
    """
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    threads = resolve_threads(threads)
    if threads == 1 or len(bounds) <= 1:
        for s, e in bounds:
            work(s, e)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for fut in [pool.submit(work, s, e) for s, e in bounds]:
            fut.result()
