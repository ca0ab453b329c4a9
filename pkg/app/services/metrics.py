"""
Classification metrics: accuracy, confusion matrix, one-vs-rest ROC/AUC,
per-class precision and recall.
"""

from typing import Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import auc as sk_auc
from sklearn.metrics import confusion_matrix as sk_confusion_matrix
from sklearn.metrics import roc_curve

from app.models.training import Metrics, RocCurve, RocSummary
from app.utils.logger import get_logger

logger = get_logger(__name__)


class MetricError(Exception):
    """Invalid labels or scores for a metric."""
    pass


def _check_labels(labels: np.ndarray, n: int, what: str) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise MetricError(f"{what} label outside [0, {n})")


def accuracy(predicted: Sequence[int] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape:
        raise MetricError(f"{predicted.size} predictions for {labels.size} labels")
    if labels.size == 0:
        return 0.0
    return float(np.mean(predicted == labels))


def confusion_matrix(
    predicted: Sequence[int] | np.ndarray, labels: Sequence[int] | np.ndarray, n: int
) -> np.ndarray:
    """Cell (r, c) counts samples of true class r predicted as c."""
    predicted = np.asarray(predicted, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_labels(predicted, n, "predicted")
    _check_labels(labels, n, "true")
    if predicted.shape != labels.shape:
        raise MetricError(f"{predicted.size} predictions for {labels.size} labels")
    if labels.size == 0:
        return np.zeros((n, n), dtype=np.int64)
    return sk_confusion_matrix(labels, predicted, labels=list(range(n))).astype(np.int64)


def roc_auc(
    scores: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    class_names: Sequence[str] | None = None,
) -> RocSummary:
    """
    One-vs-rest ROC per class over every observed threshold, trapezoidal AUC,
    and the macro average over the classes that have both positives and
    negatives. Classes without both are listed in ``skipped_classes``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.size:
        raise MetricError(f"scores {scores.shape} do not match {labels.size} labels")
    n = scores.shape[1]
    _check_labels(labels, n, "true")
    if np.unique(labels).size < 2:
        raise MetricError("ROC needs samples of at least two classes")

    names = list(class_names) if class_names is not None else [str(c) for c in range(n)]
    summary = RocSummary()
    for c in range(n):
        positives = labels == c
        if positives.all() or not positives.any():
            summary.skipped_classes.append(c)
            continue
        fpr, tpr, thresholds = roc_curve(positives, scores[:, c], drop_intermediate=False)
        summary.curves.append(
            RocCurve(
                class_index=c,
                class_name=names[c],
                fpr=fpr.tolist(),
                tpr=tpr.tolist(),
                # The first threshold is +inf by construction; keep it JSON-safe.
                thresholds=np.nan_to_num(thresholds, posinf=np.finfo(np.float64).max).tolist(),
                auc=float(np.clip(sk_auc(fpr, tpr), 0.0, 1.0)),
            )
        )
    if summary.skipped_classes:
        logger.info(f"ROC skipped classes without positives/negatives: {summary.skipped_classes}")
    if summary.curves:
        summary.macro_auc = float(np.mean([curve.auc for curve in summary.curves]))
    return summary


def per_class_table(confusion: np.ndarray, class_names: Sequence[str]) -> pd.DataFrame:
    """Support, correct count, precision and recall per class."""
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    correct = np.diag(confusion)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(predicted > 0, correct / np.maximum(predicted, 1), 0.0)
        recall = np.where(support > 0, correct / np.maximum(support, 1), 0.0)
    return pd.DataFrame(
        {
            "class": list(class_names),
            "support": support,
            "correct": correct,
            "predicted": predicted,
            "precision": precision,
            "recall": recall,
        }
    )


def compute_metrics(
    scores: np.ndarray,
    labels: Sequence[int] | np.ndarray,
    class_names: Sequence[str],
    predicted: np.ndarray | None = None,
) -> Metrics:
    """Accuracy, confusion matrix and ROC of a score matrix (argmax unless predictions given)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if predicted is None:
        predicted = scores.argmax(axis=1)
    n = len(class_names)
    try:
        roc = roc_auc(scores, labels, class_names)
    except MetricError as e:
        logger.warning(f"ROC not computed: {e}")
        roc = RocSummary(skipped_classes=list(range(n)))
    return Metrics(
        accuracy=accuracy(predicted, labels),
        confusion=confusion_matrix(predicted, labels, n),
        roc=roc,
    )
