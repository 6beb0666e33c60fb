"""Small thread-pool helper.

Work items are pure-numpy computations on disjoint arrays (no RNG state is
ever shared across a pool boundary: each item derives its own stream from
explicit indices), so results do not depend on the thread count. Results
are collected in submission order to keep every downstream reduction
fixed-order.
"""

from concurrent.futures import ThreadPoolExecutor

from .errors import ConfigurationError


def ordered_map(fn, items, threads=1):
    """Apply fn to items, optionally on a pool; results in input order."""
    threads = int(threads)
    if threads < 1:
        raise ConfigurationError(f"threads must be >= 1, got {threads}")
    items = list(items)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, it) for it in items]
        return [f.result() for f in futures]
