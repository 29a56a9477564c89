"""Chunked map-reduce over Monte Carlo trials.

Work is partitioned into fixed-size chunks with derived substreams and the
partial results are summed in chunk order, so a run is byte-reproducible
for a given (seed, trials) regardless of worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable

from .rng import chunk_layout, substream


def _run_chunk(fn: Callable, args, seed: int, chunk_index: int, count: int):
    return fn(args, substream(seed, chunk_index), count)


def _run_chunk_star(packed):
    return _run_chunk(*packed)


def map_reduce_chunks(fn: Callable, args, trials: int, seed: int,
                      workers: int = 1) -> tuple[float, ...]:
    """Apply fn(args, rng, count) per chunk and sum the result tuples.

    fn must be a module-level function (picklable) returning a tuple of
    numbers; the sums are accumulated in chunk order.
    """
    chunks = list(chunk_layout(trials))
    if workers <= 1 or len(chunks) <= 1:
        partials = [_run_chunk(fn, args, seed, c, count) for c, count in chunks]
    else:
        packed = [(fn, args, seed, c, count) for c, count in chunks]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_run_chunk_star, packed, chunksize=4))
    totals = [0.0] * len(partials[0])
    for part in partials:
        for i, v in enumerate(part):
            totals[i] += v
    return tuple(totals)
