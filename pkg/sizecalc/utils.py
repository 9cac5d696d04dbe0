"""Shared helpers: per-task RNG streams and an order-preserving worker pool."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

STAGE_TAGS = {
    "train": 1,
    "validate": 2,
    "bootstrap": 3,
    "reference": 4,
    "lda": 5,
    "r2": 6,
    "roundtrip": 7,
}


def stream_seed(master: int, index: int, stage: str) -> int:
    """Derive an independent integer seed from (master seed, task index, stage).

    The derivation only depends on its three inputs, so any partition of the
    tasks over workers sees the same streams.
    """
    entropy = [int(master) % (1 << 63), int(index), STAGE_TAGS[stage]]
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _run_chunk(payload: tuple[Callable[[int], T], list[int]]) -> list[tuple[int, T]]:
    task, chunk = payload
    return [(index, task(index)) for index in chunk]


def run_indexed(
    task: Callable[[int], T],
    indices: Sequence[int],
    workers: int = 1,
    chunk_size: int | None = None,
) -> list[tuple[int, T]]:
    """Apply ``task`` to every index and return ``(index, result)`` sorted by index.

    ``task`` must be picklable (a module-level function or a ``functools.partial``
    of one) when ``workers > 1``.
    """
    ordered = sorted(int(index) for index in indices)
    if workers <= 1 or len(ordered) <= 1:
        return [(index, task(index)) for index in ordered]

    size = chunk_size or max(1, -(-len(ordered) // (workers * 4)))
    chunks = [ordered[start : start + size] for start in range(0, len(ordered), size)]
    collected: list[tuple[int, T]] = []
    with ProcessPoolExecutor(max_workers=workers) as executor:
        for part in executor.map(_run_chunk, [(task, chunk) for chunk in chunks]):
            collected.extend(part)
    collected.sort(key=lambda item: item[0])
    return collected
