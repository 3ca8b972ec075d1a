"""Empirical latency CDFs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


class EmptySamples(ValueError):
    pass


@dataclass(frozen=True)
class LatencyCdf:
    """Sorted latency samples in microseconds.

    ``q(p)`` is the sample at index ``ceil(p*n) - 1`` for ``p > 0`` and the
    minimum for ``p == 0``.
    """

    samples: tuple[float, ...]

    def __post_init__(self):
        if not self.samples:
            raise EmptySamples("a CDF needs at least one sample")

    def __len__(self) -> int:
        return len(self.samples)

    def q(self, p: float) -> float:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p={p} outside [0, 1]")
        if p == 0.0:
            return self.samples[0]
        n = len(self.samples)
        # exact product: p*n in floats can land just below an integer
        return self.samples[min(max(math.ceil(Fraction(p) * n) - 1, 0), n - 1)]

    @property
    def min(self) -> float:
        return self.samples[0]

    @property
    def max(self) -> float:
        return self.samples[-1]

    def points(self, count: int = 200) -> list[tuple[float, float]]:
        """``(latency, cumulative fraction)`` pairs for plotting."""
        n = len(self.samples)
        step = max(n // count, 1)
        idx = list(range(step - 1, n, step))
        if idx[-1] != n - 1:
            idx.append(n - 1)
        return [(self.samples[i], (i + 1) / n) for i in idx]


def build_cdf(samples: Iterable[float]) -> LatencyCdf:
    return LatencyCdf(tuple(sorted(samples)))


def merge_cdfs(cdfs: Sequence[LatencyCdf]) -> LatencyCdf:
    merged: list[float] = []
    for c in cdfs:
        merged.extend(c.samples)
    return build_cdf(merged)
