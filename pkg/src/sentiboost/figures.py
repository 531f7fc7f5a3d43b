"""Matplotlib renderers for the report figures.

Everything draws to files (Agg backend): the fold-wise accuracy series, the
one-vs-rest ROC curves, and the confusion-matrix heat map.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import ConfusionMatrix, RocCurve
from .report import class_names

FIGSIZE = (6.0, 4.2)
DPI = 130


def _new_axes(title: str):
    fig, ax = plt.subplots(figsize=FIGSIZE, dpi=DPI)
    ax.set_title(title)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_fold_accuracies(path, fold_accuracies, dataset: str = ""):
    accs = np.asarray(fold_accuracies, dtype=np.float64)
    fig, ax = _new_axes(f"Fold-wise accuracy{f' — {dataset}' if dataset else ''}")
    ax.plot(np.arange(len(accs)), accs, marker="o")
    ax.set_xlabel("fold")
    ax.set_ylabel("accuracy")
    ax.set_xticks(np.arange(len(accs)))
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def plot_roc_curves(path, curves: list[RocCurve | None], aucs, dataset: str = ""):
    names = class_names(len(curves))
    fig, ax = _new_axes(f"One-vs-rest ROC{f' — {dataset}' if dataset else ''}")
    for k, curve in enumerate(curves):
        if curve is None:
            continue
        ax.plot(curve.fpr, curve.tpr, label=f"{names[k]} (AUC {aucs[k]:.3f})")
    ax.plot([0, 1], [0, 1], linestyle="--", color="gray", linewidth=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    _save(fig, path)


def plot_confusion(path, cm: ConfusionMatrix, dataset: str = ""):
    names = class_names(cm.num_classes)
    counts = cm.counts
    fig, ax = _new_axes(f"Confusion matrix{f' — {dataset}' if dataset else ''}")
    im = ax.imshow(counts, cmap="Blues")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ax.set_xticks(range(len(names)), names)
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    threshold = counts.max() / 2 if counts.max() else 0.5
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(
                j, i, str(int(counts[i, j])),
                ha="center", va="center",
                color="white" if counts[i, j] > threshold else "black",
            )
    _save(fig, path)
