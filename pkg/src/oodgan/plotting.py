"""Score histogram and joint-accuracy threshold curve."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from oodgan.metrics import DetectionScores, MetricError, joint_accuracy_curve, select_threshold, threshold_grid

PLOT_KINDS = ("histogram", "threshold_curve")


def histogram_data(scores: DetectionScores, bins: int = 20) -> dict:
    """IND and OOD counts over equal-width bins on [0, 1]."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    ind, _ = np.histogram(scores.score[~scores.is_ood], bins=edges)
    ood, _ = np.histogram(scores.score[scores.is_ood], bins=edges)
    return {"edges": edges, "ind": ind, "ood": ood}


def curve_data(scores: DetectionScores) -> dict:
    grid = threshold_grid(scores)
    curve = joint_accuracy_curve(scores, grid)
    best_t, best_acc = select_threshold(scores)
    return {
        "thresholds": np.array([t for t, _ in curve]),
        "accuracy": np.array([a for _, a in curve]),
        "best_threshold": best_t,
        "best_accuracy": best_acc,
    }


def render(scores: DetectionScores, kind: str, path: str | Path, provenance: str = "") -> dict:
    """Draw ``kind`` to a PNG at ``path``; returns the plotted data.

    ``provenance`` is stored in the PNG metadata. The file carries no
    timestamp or software tag, so equal inputs give equal bytes.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    if len(scores) == 0:
        raise MetricError("no detection records to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4), dpi=100)
    try:
        if kind == "histogram":
            data = histogram_data(scores)
            edges = data["edges"]
            width = np.diff(edges)
            ax.bar(edges[:-1], data["ind"], width=width, align="edge", alpha=0.6, label="IND")
            ax.bar(edges[:-1], data["ood"], width=width, align="edge", alpha=0.6, label="OOD")
            ax.set_xlabel("maximum intent probability")
            ax.set_ylabel("count")
        else:
            data = curve_data(scores)
            ax.plot(data["thresholds"], data["accuracy"], label="joint accuracy")
            ax.axvline(data["best_threshold"], color="k", linestyle="--", linewidth=1)
            ax.plot([data["best_threshold"]], [data["best_accuracy"]], "o", color="k",
                    label=f"max {data['best_accuracy']:.3f} at {data['best_threshold']:.3f}")
            ax.set_xlabel("threshold")
            ax.set_ylabel("joint accuracy")
        ax.legend()
        fig.tight_layout()
        meta = {"Software": None}
        if provenance:
            meta["Description"] = provenance
        fig.savefig(path, format="png", metadata=meta)
    finally:
        plt.close(fig)
    return data
