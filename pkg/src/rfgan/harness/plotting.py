"""Static figures: SCD against receptive field, and translation grids."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..scd import edge_points, extract_edges  # noqa: E402
from .report import SweepReport  # noqa: E402


class EmptyReport(ValueError):
    pass


def emit_plot(report: SweepReport, path: str | Path) -> list[tuple[int, float]]:
    """Mean SCD per receptive field on a log-scale RF axis.

    Per-model means are drawn faintly behind the per-RF averages. A CSV with
    the report rows is written next to the figure. Returns the plotted
    (rf, mean_scd) points, sorted by decreasing RF.
    """
    if not report.rows:
        raise EmptyReport("report has no rows")
    path = Path(path)
    points = sorted(report.per_rf.items(), reverse=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.scatter([r.receptive_field for r in report.rows], [r.mean_scd for r in report.rows],
               s=14, color="0.6", label="per model", zorder=2)
    ax.plot([p[0] for p in points], [p[1] for p in points], "o-", color="C0",
            label="mean per receptive field", zorder=3)
    ax.set_xscale("log")
    ax.set_xticks([p[0] for p in points])
    ax.set_xticklabels([str(p[0]) for p in points])
    ax.minorticks_off()
    ax.set_xlabel("discriminator receptive field (px)")
    ax.set_ylabel("mean SCD (px)")
    ax.legend(frameon=False, fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    path.with_suffix(".csv").write_text(report.rows_csv())
    return points


def _edge_overlay(img: np.ndarray, threshold: float, sigma: float) -> np.ndarray:
    from ..scd import EdgeConfig

    pts = edge_points(extract_edges(img.astype(np.float64) / 255.0, config=EdgeConfig(sigma=sigma)),
                      threshold).points
    out = (img.astype(np.float64) * 0.5).astype(np.uint8)
    out[pts[:, 0], pts[:, 1]] = (255, 40, 40)
    return out


def emit_grid(rows: Sequence[Sequence[np.ndarray]], captions: Sequence[str], path: str | Path,
              edges: bool = False, threshold: float = 0.5, sigma: float = 1.0) -> tuple[int, int]:
    """Lay out image rows (input first, then one column per model).

    With ``edges=True`` every image is shown with its thresholded edge
    points overlaid. Returns (n_rows, n_columns).
    """
    if not rows or not rows[0]:
        raise EmptyReport("no images to lay out")
    n_cols = len(rows[0])
    if any(len(r) != n_cols for r in rows) or len(captions) != n_cols:
        raise ValueError("every row needs one image per caption")
    fig, axes = plt.subplots(len(rows), n_cols, figsize=(1.6 * n_cols, 1.6 * len(rows)),
                             squeeze=False)
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            ax = axes[i][j]
            ax.imshow(_edge_overlay(img, threshold, sigma) if edges else img, interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if i == 0:
                ax.set_title(captions[j], fontsize=7)
    fig.tight_layout(pad=0.3)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return len(rows), n_cols
