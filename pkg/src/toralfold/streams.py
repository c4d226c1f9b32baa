"""Reproducible random streams keyed by ``(seed, purpose, block)``.

Work is split into blocks of a fixed size that does not depend on the
number of workers, and each block draws from its own generator.  That is
enough for results to be bit-identical however blocks are distributed.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterator, Sequence, TypeVar

import numpy as np

#: samples per independent stream; changing it changes every seeded result
BLOCK = 1024

# purpose tags, folded into the seed sequence
FORWARD_STARTS = 11
BACKWARD_ROOTS = 12
BACKWARD_BRANCHES = 13
PREHISTORY_BRANCHES = 14
ATOM_DRAWS = 15
HAAR_DRAWS = 16
BOXES = 17

T = TypeVar("T")


def stream(seed: int, purpose: int, block: int = 0, *extra: int) -> np.random.Generator:
    """Independent generator for one ``(seed, purpose, block, *extra)`` key."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = [int(seed), int(purpose), int(block)] + [int(e) for e in extra]
    return np.random.default_rng(np.random.SeedSequence(key))


def blocks(n: int, size: int = BLOCK) -> list[tuple[int, int, int]]:
    """Split ``range(n)`` into ``(block_index, start, stop)`` triples."""
    return [(b, s, min(s + size, n)) for b, s in enumerate(range(0, n, size))]


def run_blocks(fn: Callable[..., T], tasks: Sequence[tuple], workers: int = 1) -> list[T]:
    """Apply ``fn(*task)`` to every task, in order, optionally on a process pool.

    The output order always follows ``tasks`` so reductions over the list
    are independent of ``workers``.
    """
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


def iter_blocks(fn: Callable[..., T], tasks: Sequence[tuple], workers: int = 1) -> Iterator[T]:
    """Like :func:`run_blocks` but yields results in task order as they finish.

    At most ``2 * workers`` tasks are in flight, so large per-task results can
    be reduced on the fly without holding them all.
    """
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield fn(*t)
        return
    window = 2 * workers
    with ProcessPoolExecutor(max_workers=workers) as pool:
        queue = deque(pool.submit(fn, *t) for t in tasks[:window])
        nxt = len(queue)
        while queue:
            result = queue.popleft().result()
            if nxt < len(tasks):
                queue.append(pool.submit(fn, *tasks[nxt]))
                nxt += 1
            yield result
