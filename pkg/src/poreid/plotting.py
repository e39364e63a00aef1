"""Report figures: detection quality against binarization confidence and CMC curves."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .evaluation import BenchmarkResult
from .identification import CmcCurve

# no timestamps or version strings, so reruns give identical files
PNG_METADATA = {"Software": None}


def _figure(size=(5.0, 3.5)):
    fig = Figure(figsize=size, dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    return path


def plot_benchmark(result: BenchmarkResult, path, title: str = "") -> Path:
    """Aggregate precision, recall and F1 per swept confidence value."""
    fig, ax = _figure()
    conf = sorted(result.aggregate)
    reps = [result.aggregate[c] for c in conf]
    for name, marker in (("precision", "o"), ("recall", "s"), ("f1", "^")):
        ax.plot(conf, [getattr(r, name) for r in reps], marker=marker, label=name)
    ax.set_xlabel("binarization confidence")
    ax.set_ylabel("score")
    ax.set_ylim(0.0, 1.02)
    if len(conf) == 1:
        ax.set_xlim(conf[0] - 10, conf[0] + 10)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    if title:
        ax.set_title(title, fontsize=9)
    return _save(fig, path)


def plot_cmc(curves: dict[str, CmcCurve], path, title: str = "") -> Path:
    """One step line per labelled curve, ranks on the x axis."""
    fig, ax = _figure()
    r_max = 1
    for label, c in curves.items():
        ranks = np.arange(1, len(c.hits_at_rank) + 1)
        r_max = max(r_max, len(ranks))
        ax.step(ranks, c.hits_at_rank, where="post", marker=".", label=label)
    ax.set_xlabel("rank")
    ax.set_ylabel("identification rate")
    ax.set_xlim(0.5, r_max + 0.5)
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    if title:
        ax.set_title(title, fontsize=9)
    return _save(fig, path)
