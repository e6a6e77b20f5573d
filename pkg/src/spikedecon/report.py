"""Figures for sweep results, rendered with matplotlib's object API."""
from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

__all__ = ["plot_sweep"]

_SERIES = (
    ("md_esprit_max", "ESPRIT (worst case)", "C0", "-"),
    ("md_pgd_max", "ESPRIT + PGD (worst case)", "C1", "-"),
    ("md_esprit_median", "ESPRIT (median)", "C0", "--"),
    ("md_pgd_median", "ESPRIT + PGD (median)", "C1", "--"),
)
_XLABEL = {"sigma": r"PSF width $\sigma$", "snr": "SNR (dB)"}
_FLOOR = 1e-16


def plot_sweep(rows: list[dict], axis: str, path, title: str | None = None) -> None:
    """Matching distance against the sweep value, log-scale y, 800x600 SVG."""
    fig = Figure(figsize=(800 / 72, 600 / 72), dpi=72)
    ax = fig.add_subplot()
    x = np.array([row["sweep_value"] for row in rows])
    for key, label, color, style in _SERIES:
        y = np.array([row[key] for row in rows], dtype=float)
        ax.plot(x, np.maximum(y, _FLOOR), style, color=color, marker="o", ms=4, label=label)
    ax.set_yscale("log")
    ax.set_xlabel(_XLABEL.get(axis, axis))
    ax.set_ylabel("matching distance")
    ax.set_title(title or f"Location error vs {axis}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
