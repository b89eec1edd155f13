from __future__ import annotations

import os


def worker_count() -> int:
    """Worker cap from ``MEANFIELD_THREADS``, else the CPU count."""
    raw = os.environ.get("MEANFIELD_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1
