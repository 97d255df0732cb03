"""
Replication Runner
==================

Runs Monte Carlo replications in contiguous chunks with joblib. Replication r
always draws from stream.spawn(r), and chunk outputs are concatenated in chunk
order, so results do not depend on the number of workers.
"""

import logging
from typing import Callable, List, TypeVar

import joblib
import numpy as np

from src.toeplitz_testing.errors import InvalidParameterError
from src.toeplitz_testing.sampler import RngStream

logger = logging.getLogger(__name__)

T = TypeVar("T")


def _run_chunk(fn: Callable[[np.random.Generator, int], T], stream: RngStream, indices: np.ndarray) -> List[T]:
    return [fn(stream.spawn(int(r)).generator(), int(r)) for r in indices]


def run_replications(
    fn: Callable[[np.random.Generator, int], T],
    R: int,
    stream: RngStream,
    workers: int = 1,
) -> List[T]:
    """Evaluate fn(generator, r) for r = 0..R-1 and return the results in replication order"""
    if R < 1:
        raise InvalidParameterError(f"number of replications must be at least 1, got {R}")
    if workers == 0:
        raise InvalidParameterError("'workers == 0' is not valid; use a positive count or -1 for all CPUs")
    if workers < 0:
        workers = max(1, joblib.cpu_count() + 1 + workers)
    chunks = [chunk for chunk in np.array_split(np.arange(R), min(workers, R)) if chunk.size]
    if len(chunks) == 1:
        return _run_chunk(fn, stream, chunks[0])
    logger.debug(f"Running {R} replications in {len(chunks)} chunks")
    outputs = joblib.Parallel(n_jobs=len(chunks), prefer="threads")(
        joblib.delayed(_run_chunk)(fn, stream, chunk) for chunk in chunks
    )
    return [result for chunk_output in outputs for result in chunk_output]
