"""Figure rendering for attribution reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .attribution import AttributionReport


def render_shapley_bars(report: AttributionReport, path: str | Path) -> Path:
    """Horizontal bar chart of per-confounder Shapley values, best rank on top."""
    rows = report.rows_by_rank()
    names = [r.name for r in rows]
    values = [r.shapley for r in rows]
    colors = ["#d62728" if v < 0 else "#1f77b4" for v in values]

    fig, ax = plt.subplots(figsize=(8.0, max(3.0, 0.5 * len(rows) + 1.6)))
    pos = range(len(rows) - 1, -1, -1)  # rank 1 at the top
    ax.barh(list(pos), values, color=colors)
    ax.set_yticks(list(pos))
    ax.set_yticklabels(names)
    ax.axvline(0.0, color="0.3", linewidth=0.8)
    ax.set_xlabel("Shapley value")
    title = "Confounder contributions to the survival-ratio adjustment"
    if report.mode == "sampled":
        title = f"Confounder contributions (sampled, m={report.m_used})"
    ax.set_title(title)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
