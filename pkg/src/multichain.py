"""
Concurrent execution of independent chains and simulation replicates.

Chain m draws from SeedSequence(seed, spawn_key=(m,)); results are
collected in submission order, so output does not depend on scheduling.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from tqdm import tqdm

from .errors import InputValidationError
from .model import GroupedDesign, Hyperparameters
from .sampler import PosteriorDraws, SamplerConfig, run_chain

log = logging.getLogger(__name__)

THREADS_ENV = "GIGG_THREADS"


def resolve_threads(flag: int | None = None) -> int:
    """Worker count: --threads flag, then $GIGG_THREADS, then the CPU count."""
    if flag is not None:
        value, source = flag, "--threads"
    elif os.environ.get(THREADS_ENV):
        raw = os.environ[THREADS_ENV]
        try:
            value = int(raw)
        except ValueError as exc:
            raise InputValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        source = THREADS_ENV
    else:
        return os.cpu_count() or 1
    if value < 1:
        raise InputValidationError(f"{source} must be >= 1, got {value}")
    return value


def map_ordered(fn: Callable, items: Sequence, threads: int, desc: str = "", progress: bool = False) -> list:
    """Apply fn to every item on a thread pool; results keep the item order."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=not progress)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, item) for item in items]
        return [f.result() for f in tqdm(futures, desc=desc, disable=not progress)]


def run_chains(
    design: GroupedDesign,
    hyper: Hyperparameters,
    config: SamplerConfig,
    n_chains: int = 1,
    threads: int | None = None,
) -> list[PosteriorDraws]:
    """Run n_chains independent chains of the same model.

    Returns:
        PosteriorDraws per chain, in chain order.
    """
    if n_chains < 1:
        raise InputValidationError(f"number of chains must be >= 1, got {n_chains}")
    workers = min(resolve_threads(threads), n_chains)
    log.info("Running %d chain(s) on %d thread(s)", n_chains, workers)
    return map_ordered(
        lambda m: run_chain(design, hyper, config, chain=m),
        list(range(n_chains)),
        workers,
    )
