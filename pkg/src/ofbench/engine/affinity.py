"""CPU pinning for worker threads."""

from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)


def available_cores() -> list[int]:
    if hasattr(os, "sched_getaffinity"):
        return sorted(os.sched_getaffinity(0))
    return list(range(os.cpu_count() or 1))


def core_for_worker(worker_index: int, cores: list[int]) -> int:
    return cores[worker_index % len(cores)]


def pin_worker(worker_index: int, cores: list[int] | None = None) -> int | None:
    """Pin the calling thread to ``cores[worker_index % len(cores)]``.

    Returns the chosen core, or None when the platform refuses; never raises.
    """
    cores = cores or available_cores()
    core = core_for_worker(worker_index, cores)
    try:
        # pid 0 is the calling thread on Linux
        os.sched_setaffinity(0, {core})
    except (AttributeError, OSError) as exc:
        log.warning("event=pin_failed worker=%d core=%d error=%s", worker_index, core, exc)
        return None
    return core
