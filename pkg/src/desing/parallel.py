"""Thread-count policy and an order-preserving parallel map."""
import os
from concurrent.futures import ThreadPoolExecutor


def thread_count():
    """Worker cap from ``DESING_THREADS`` (default: CPU count)."""
    raw = os.environ.get("DESING_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def pmap(fn, items):
    """``list(map(fn, items))`` on a thread pool; results keep input order."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
