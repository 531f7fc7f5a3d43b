"""Report documents: metrics JSON, ROC CSV export, and the comparison table.

The cross-validation report is a JSON document with fixed key order: dataset,
per-class blocks (precision, recall, f1, auc), accuracy, confusion (row-major
integer array), fold_accuracies, then the cross-fold standard deviations and
the run-configuration echo. Scalar metrics aggregate as the unweighted mean
across folds; the confusion matrix and ROC curves pool every held-out
prediction.

Comparison baselines are accuracies transcribed from published visual
sentiment studies; they are reference numbers only and are never recomputed.
"""

from __future__ import annotations

import json

import numpy as np

from .metrics import CVResult, RocCurve
from .resnet50 import CLASS_NAMES

# (method, dataset, accuracy %, year) — transcribed literature results
COMPARISON_BASELINES = (
    ("BiLSTM with feature fusion", "EmotionROI", 60.86, 2022),
    ("VGG19", "CrowdFlower", 73.0, 2022),
    ("ResNet50V2", "CrowdFlower", 75.0, 2022),
    ("EfficientNet-B7", "EMOTIC", 73.80, 2022),
    ("CNN with affective regions", "Self-Collected", 76.01, 2020),
    ("Event concepts with object detection", "CrowdFlower", 74.0, 2023),
)

OWN_METHOD_NAME = "ResNet50 deep features + gradient boosting"


def class_names(num_classes: int) -> tuple[str, ...]:
    if num_classes == len(CLASS_NAMES):
        return CLASS_NAMES
    return tuple(f"class{k}" for k in range(num_classes))


def cv_report_document(result: CVResult, dataset: str, config_echo: dict) -> dict:
    """Assemble the report dict in its fixed key order."""
    num_classes = result.pooled_confusion.num_classes
    names = class_names(num_classes)
    classes = {}
    for k, name in enumerate(names):
        undefined = []
        if any(r.scores.precision_undefined[k] for r in result.fold_reports):
            undefined.append("precision")
        if any(r.scores.recall_undefined[k] for r in result.fold_reports):
            undefined.append("recall")
        if any(r.scores.f1_undefined[k] for r in result.fold_reports):
            undefined.append("f1")
        if any(r.auc_undefined[k] for r in result.fold_reports):
            undefined.append("auc")
        classes[name] = {
            "precision": float(result.mean["precision"][k]),
            "recall": float(result.mean["recall"][k]),
            "f1": float(result.mean["f1"][k]),
            "auc": float(result.mean["auc"][k]),
            "undefined": undefined,
        }
    return {
        "dataset": dataset,
        "classes": classes,
        "accuracy": float(result.mean["accuracy"]),
        "confusion": [int(v) for v in result.pooled_confusion.counts.reshape(-1)],
        "fold_accuracies": [float(a) for a in result.fold_accuracies],
        "aggregate_std": {
            "accuracy": float(result.std["accuracy"]),
            "classes": {
                name: {
                    "precision": float(result.std["precision"][k]),
                    "recall": float(result.std["recall"][k]),
                    "f1": float(result.std["f1"][k]),
                    "auc": float(result.std["auc"][k]),
                }
                for k, name in enumerate(names)
            },
        },
        "config": config_echo,
    }


def report_json(document: dict) -> str:
    return json.dumps(document, indent=2) + "\n"


def roc_csv(curves: list[RocCurve | None], num_classes: int) -> str:
    """ROC points as ``class,threshold,fpr,tpr`` rows, one block per class."""
    names = class_names(num_classes)
    lines = ["class,threshold,fpr,tpr"]
    for k, curve in enumerate(curves):
        if curve is None:
            continue
        for thr, fpr, tpr in zip(curve.thresholds, curve.fpr, curve.tpr):
            lines.append(f"{names[k]},{float(thr)!r},{float(fpr)!r},{float(tpr)!r}")
    return "\n".join(lines) + "\n"


def percent(value: float) -> str:
    """Whole-percent display used by the table renderers."""
    return f"{round(value * 100):d}%"


def comparison_rows(reports: list[dict]) -> list[tuple[str, str, float, str]]:
    """(method, dataset, accuracy %, source) rows: baselines, then run reports."""
    rows = [
        (method, dataset, acc, f"reported ({year})")
        for method, dataset, acc, year in COMPARISON_BASELINES
    ]
    for report in reports:
        rows.append(
            (OWN_METHOD_NAME, report.get("dataset", "?"), report["accuracy"] * 100.0, "this run")
        )
    return rows


def comparison_table(reports: list[dict]) -> str:
    rows = comparison_rows(reports)
    headers = ("method", "dataset", "accuracy", "source")
    rendered = [
        (method, dataset, (f"{acc:.2f}%" if acc % 1 else f"{acc:.0f}%"), source)
        for method, dataset, acc, source in rows
    ]
    widths = [
        max(len(headers[i]), max(len(r[i]) for r in rendered)) for i in range(4)
    ]
    sep = "  "
    lines = [
        sep.join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        sep.join("-" * w for w in widths),
    ]
    for r in rendered:
        lines.append(sep.join(r[i].ljust(widths[i]) for i in range(4)))
    return "\n".join(lines) + "\n"


def comparison_csv(reports: list[dict]) -> str:
    lines = ["method,dataset,accuracy_percent,source"]
    for method, dataset, acc, source in comparison_rows(reports):
        lines.append(f"{method},{dataset},{acc!r},{source}")
    return "\n".join(lines) + "\n"


def fold_accuracy_csv(fold_accuracies) -> str:
    lines = ["fold,accuracy"]
    for f, acc in enumerate(np.asarray(fold_accuracies, dtype=np.float64)):
        lines.append(f"{f},{float(acc)!r}")
    return "\n".join(lines) + "\n"
