"""Throughput per Watt from operator-supplied power figures."""

from __future__ import annotations

from dataclasses import dataclass


class NonpositiveWatts(ValueError):
    pass


@dataclass(frozen=True)
class EnergyReport:
    watts: float
    throughput: float

    def __post_init__(self):
        if not self.watts > 0:
            raise NonpositiveWatts(f"watts must be > 0, got {self.watts}")

    @property
    def efficiency(self) -> float:
        """Responses per second per Watt."""
        return self.throughput / self.watts


def efficiency(summary, watts: float) -> EnergyReport:
    """``summary`` is a ``RunSummary`` or a plain mean throughput."""
    throughput = summary if isinstance(summary, (int, float)) else summary.mean
    return EnergyReport(float(watts), float(throughput))
