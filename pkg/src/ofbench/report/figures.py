"""PNG figures rendered next to the CSV/JSON output."""

from __future__ import annotations

import statistics
from collections import defaultdict
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .cdf import LatencyCdf  # noqa: E402

_STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
}
_XLABEL = {
    "concurrency": "engine worker threads",
    "heterogeneity": "unique MAC addresses per switch",
    "connectivity": "emulated switches",
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def throughput_figure(rows: list[dict], axis: str, path: Path) -> Path:
    by_point: dict[int, list[float]] = defaultdict(list)
    for r in rows:
        if r["axis"] == axis and r["throughput_rps"] is not None:
            by_point[r["point"]].append(r["throughput_rps"])
    xs = sorted(by_point)
    means = [statistics.fmean(by_point[x]) for x in xs]
    errs = [statistics.stdev(by_point[x]) if len(by_point[x]) > 1 else 0.0 for x in xs]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3)
        if axis == "heterogeneity" or (xs and max(xs) / max(min(xs), 1) >= 100):
            ax.set_xscale("log")
        ax.set_xlabel(_XLABEL.get(axis, axis))
        ax.set_ylabel("responses / s")
        ax.set_title(f"throughput vs {axis}")
        ax.set_ylim(bottom=0)
        return _save(fig, path)


def cdf_figure(cdfs: Mapping[str, LatencyCdf], path: Path) -> Path:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, cdf in cdfs.items():
            pts = cdf.points()
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post", label=label)
        ax.set_xscale("log")
        ax.set_xlabel("latency (µs)")
        ax.set_ylabel("fraction of responses")
        ax.set_ylim(0, 1.01)
        ax.legend(loc="lower right")
        return _save(fig, path)


def efficiency_figure(rows: list[dict], path: Path) -> Path:
    by_key: dict[str, list[float]] = defaultdict(list)
    for r in rows:
        if r["efficiency_rps_per_w"] is not None:
            by_key[f"{r['axis']}={r['point']}"].append(r["efficiency_rps_per_w"])
    labels = list(by_key)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.bar(range(len(labels)), [statistics.fmean(by_key[k]) for k in labels])
        ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
        ax.set_ylabel("responses / s / W")
        ax.set_title("throughput per Watt")
        return _save(fig, path)


def render_figures(rows: list[dict], out_dir: str | Path,
                   cdfs: Mapping[str, LatencyCdf] | None = None) -> list[Path]:
    """Write one throughput plot per axis, plus CDF and efficiency plots when there is data."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for axis in sorted({r["axis"] for r in rows}):
        paths.append(throughput_figure(rows, axis, out / f"throughput_{axis}.png"))
    if cdfs:
        paths.append(cdf_figure(cdfs, out / "latency_cdf.png"))
    if any(r["efficiency_rps_per_w"] is not None for r in rows):
        paths.append(efficiency_figure(rows, out / "efficiency.png"))
    return paths
