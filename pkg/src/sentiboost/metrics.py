"""Evaluation kit: confusion matrices, per-class scores, ROC/AUC, and
stratified k-fold cross-validation.

Conventions:

* Confusion matrix rows are the true class, columns the predicted class.
* 0/0 metric cells are reported as 0.0 with an ``undefined`` flag set, so
  reports stay serializable and comparisons stay total.
* AUC is the one-vs-rest Mann-Whitney statistic with half credit for ties;
  the ROC curve is the threshold sweep over distinct scores, whose trapezoid
  area equals that statistic.
* Fold assignment shuffles each class independently (seeded per class) and
  deals members round-robin, so per-class fold counts never differ by more
  than one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gbm import GBMConfig, fit, predict_class, predict_proba


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray  # K x K int64

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Threshold sweep from (0, 0) to (1, 1); coordinates non-decreasing."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


@dataclass(eq=False)
class ClassScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    precision_undefined: np.ndarray
    recall_undefined: np.ndarray
    f1_undefined: np.ndarray


@dataclass(eq=False)
class MetricsReport:
    """Per-class precision/recall/F1/AUC plus accuracy, confusion, curves."""

    dataset: str
    scores: ClassScores
    auc: np.ndarray
    auc_undefined: np.ndarray
    accuracy: float
    confusion: ConfusionMatrix
    curves: list[RocCurve | None]


def _check_labels(labels, num_classes, name="labels") -> np.ndarray:
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"{name} must lie in [0, {num_classes})")
    return labels


def confusion(y_true, y_pred, num_classes: int) -> ConfusionMatrix:
    """counts[t][p] = number of samples with true class t predicted as p."""
    y_true = _check_labels(y_true, num_classes, "y_true")
    y_pred = _check_labels(y_pred, num_classes, "y_pred")
    if y_true.shape != y_pred.shape:
        raise ValueError(
            f"length mismatch: {y_true.shape[0]} true vs {y_pred.shape[0]} predicted"
        )
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def precision_recall_f1(cm: ConfusionMatrix) -> ClassScores:
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    col_sums = counts.sum(axis=0)
    row_sums = counts.sum(axis=1)
    precision_undefined = col_sums == 0
    recall_undefined = row_sums == 0
    precision = np.divide(diag, col_sums, out=np.zeros_like(diag), where=~precision_undefined)
    recall = np.divide(diag, row_sums, out=np.zeros_like(diag), where=~recall_undefined)
    pr_sum = precision + recall
    f1_undefined = pr_sum == 0
    f1 = np.divide(2 * precision * recall, pr_sum, out=np.zeros_like(diag), where=~f1_undefined)
    return ClassScores(precision, recall, f1, precision_undefined, recall_undefined, f1_undefined)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy is undefined for an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def _binary_masks(labels, positive_class):
    labels = np.asarray(labels).reshape(-1)
    pos = labels == positive_class
    p, n = int(pos.sum()), int((~pos).sum())
    if p == 0 or n == 0:
        raise ValueError(
            f"class {positive_class} is degenerate for ROC/AUC: "
            f"{p} positive and {n} negative samples"
        )
    return pos, p, n


def auc_ovr(scores, labels, positive_class: int) -> float:
    """One-vs-rest AUC: (concordant pairs + half the ties) / (P * N)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos, p, n = _binary_masks(labels, positive_class)
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    # average ranks within tie groups (1-based)
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(scores)]])
    ranks = np.empty(len(scores), dtype=np.float64)
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + 1 + e)
    rank_sum = ranks[pos].sum()
    return float((rank_sum - p * (p + 1) / 2.0) / (p * n))


def roc_curve_ovr(scores, labels, positive_class: int) -> RocCurve:
    """Sweep thresholds over distinct scores, descending; ties move diagonally."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    pos, p, n = _binary_masks(labels, positive_class)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = pos[order].astype(np.int64)
    cut = np.flatnonzero(np.diff(sorted_scores))  # last index of each tie group
    cut = np.concatenate([cut, [len(scores) - 1]])
    tp = np.cumsum(sorted_pos)[cut]
    fp = (cut + 1) - tp
    fpr = np.concatenate([[0.0], fp / n])
    tpr = np.concatenate([[0.0], tp / p])
    thresholds = np.concatenate([[np.inf], sorted_scores[cut]])
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def trapezoid_area(curve: RocCurve) -> float:
    dx = curve.fpr[1:] - curve.fpr[:-1]
    return float(0.5 * np.sum(dx * (curve.tpr[1:] + curve.tpr[:-1])))


def stratified_kfold(labels, k: int, seed: int = 0) -> np.ndarray:
    """Fold index per sample: per-class shuffle, then round-robin deal."""
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    n = labels.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the {n} available samples")
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    assignment = np.empty(n, dtype=np.int64)
    offset = 0  # continue the deal across classes so no fold stays empty
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed % 2**64, spawn_key=(int(cls),))
        )
        shuffled = members[rng.permutation(members.size)]
        assignment[shuffled] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return assignment


def evaluate(y_true, y_pred, proba, num_classes: int, dataset: str = "") -> MetricsReport:
    """Bundle every per-class metric for one evaluated sample set.

    ``proba`` columns are the per-class scores used for ROC/AUC; a class that
    is degenerate in this sample set (no positives or no negatives) gets
    auc 0.0, an undefined flag, and no curve.
    """
    proba = np.asarray(proba, dtype=np.float64)
    if proba.shape != (len(np.asarray(y_true).reshape(-1)), num_classes):
        raise ValueError(
            f"proba must have shape (N, {num_classes}), got {tuple(proba.shape)}"
        )
    cm = confusion(y_true, y_pred, num_classes)
    auc = np.zeros(num_classes)
    auc_undefined = np.zeros(num_classes, dtype=bool)
    curves: list[RocCurve | None] = []
    for cls in range(num_classes):
        try:
            auc[cls] = auc_ovr(proba[:, cls], y_true, cls)
            curves.append(roc_curve_ovr(proba[:, cls], y_true, cls))
        except ValueError:
            auc_undefined[cls] = True
            curves.append(None)
    return MetricsReport(
        dataset=dataset,
        scores=precision_recall_f1(cm),
        auc=auc,
        auc_undefined=auc_undefined,
        accuracy=accuracy(cm),
        confusion=cm,
        curves=curves,
    )


@dataclass(eq=False)
class CVResult:
    """Per-fold reports plus cross-fold aggregates.

    ``mean``/``std`` aggregate each metric across folds (undefined cells
    contribute their reported 0.0). The pooled confusion matrix and curves
    combine every held-out prediction, which is what the report files and
    figures render.
    """

    fold_reports: list[MetricsReport]
    fold_accuracies: np.ndarray
    mean: dict[str, np.ndarray | float] = field(default_factory=dict)
    std: dict[str, np.ndarray | float] = field(default_factory=dict)
    pooled_confusion: ConfusionMatrix | None = None
    pooled_curves: list[RocCurve | None] = field(default_factory=list)
    pooled_auc: np.ndarray | None = None


def _aggregate(reports: list[MetricsReport]) -> tuple[dict, dict]:
    stack = {
        "accuracy": np.array([r.accuracy for r in reports]),
        "precision": np.stack([r.scores.precision for r in reports]),
        "recall": np.stack([r.scores.recall for r in reports]),
        "f1": np.stack([r.scores.f1 for r in reports]),
        "auc": np.stack([r.auc for r in reports]),
    }
    mean = {name: values.mean(axis=0) for name, values in stack.items()}
    std = {name: values.std(axis=0) for name, values in stack.items()}
    mean["accuracy"] = float(mean["accuracy"])
    std["accuracy"] = float(std["accuracy"])
    return mean, std


def cross_validate(
    features,
    labels,
    config: GBMConfig | None = None,
    k: int = 10,
    seed: int = 0,
    dataset: str = "",
) -> CVResult:
    """Train on k-1 folds, evaluate on the held-out fold, k times over."""
    config = config or GBMConfig()
    X = np.ascontiguousarray(features, dtype=np.float32)
    y = _check_labels(labels, config.num_classes)
    folds = stratified_kfold(y, k, seed)
    num_classes = config.num_classes

    fold_reports = []
    pooled_true = np.empty_like(y)
    pooled_pred = np.empty_like(y)
    pooled_proba = np.empty((len(y), num_classes))
    for f in range(k):
        test = folds == f
        model = fit(X[~test], y[~test], config)
        proba = predict_proba(model, X[test])
        pred = predict_class(model, X[test])
        pooled_true[test] = y[test]
        pooled_pred[test] = pred
        pooled_proba[test] = proba
        fold_reports.append(
            evaluate(y[test], pred, proba, num_classes, dataset=f"{dataset}[fold {f}]")
        )

    mean, std = _aggregate(fold_reports)
    pooled = evaluate(pooled_true, pooled_pred, pooled_proba, num_classes, dataset=dataset)
    return CVResult(
        fold_reports=fold_reports,
        fold_accuracies=np.array([r.accuracy for r in fold_reports]),
        mean=mean,
        std=std,
        pooled_confusion=pooled.confusion,
        pooled_curves=pooled.curves,
        pooled_auc=pooled.auc,
    )
