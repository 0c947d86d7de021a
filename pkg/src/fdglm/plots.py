"""Figure rendering for run reports.

Renders convergence curves straight to image files (headless backend, no
interactive windows); the CLI drops these next to the delimited output so a
run leaves both machine- and human-readable traces.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["line_plot"]

_GOLDEN = (6.4, 3.95)


def line_plot(path, series, *, xlabel, ylabel, title=None, logx=False):
    """Render labelled line series to ``path``.

    ``series`` is an iterable of ``(x, y, label)`` triples; ``label`` may be
    None for a single anonymous curve.
    """
    fig, ax = plt.subplots(figsize=_GOLDEN)
    any_label = False
    for x, y, label in series:
        ax.plot(x, y, label=label, linewidth=1.4)
        any_label = any_label or label is not None
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if any_label:
        ax.legend(fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=160)
    plt.close(fig)
