"""SVG line charts rendered from the CSV tables a run writes."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .records import read_columns  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "font.size": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "viscidlab",  # stable element ids
    "svg.fonttype": "none",
}


def line_chart(
    csv_path: str | Path,
    out_path: str | Path,
    x: str,
    ys: list[str],
    xlabel: str | None = None,
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
    title: str | None = None,
    markers: bool = True,
) -> Path:
    """Plot columns ``ys`` against ``x`` from a CSV; non-finite points are skipped."""
    cols = read_columns(csv_path)
    out_path = Path(out_path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for y in ys:
            xv, yv = np.asarray(cols[x], float), np.asarray(cols[y], float)
            ok = np.isfinite(xv) & np.isfinite(yv)
            if logy:
                ok &= yv > 0
            ax.plot(xv[ok], yv[ok], marker="o" if markers else None, ms=3, label=y)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel or x)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(ys) > 1:
            ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        fig.savefig(out_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return out_path
