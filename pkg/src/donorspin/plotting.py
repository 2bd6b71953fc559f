"""SVG figures drawn from the same arrays written to CSV."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_SVG_META = {"Date": None, "Creator": None}
matplotlib.rcParams["svg.hashsalt"] = "donorspin"


def plot_series(path: Path, series: Sequence[dict], xlabel: str, ylabel: str,
                logx: bool = False, logy: bool = False, title: str | None = None) -> Path:
    """Each series is ``{"x", "y", "label", "style"}`` with style ``"line"`` or ``"points"``;
    an optional ``"yerr"`` draws error bars on point series."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for s in series:
        if s.get("style", "line") == "points":
            ax.errorbar(s["x"], s["y"], yerr=s.get("yerr"), fmt="o", ms=3, capsize=2, label=s.get("label"))
        else:
            ax.plot(s["x"], s["y"], "-", label=s.get("label"))
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if any(s.get("label") for s in series):
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return Path(path)
