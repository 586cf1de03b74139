"""Threshold-free and thresholded classification metrics of damage scores."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from app.utils.errors import InvalidArgumentError

ROC_COLUMNS = ["threshold", "fpr", "tpr"]


@dataclass(frozen=True)
class RocCurve:
    """
    ROC points ordered by decreasing threshold.

    thresholds[0] is +inf so the curve starts at (0, 0); the last point is (1, 1).
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.fpr, self.tpr])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"threshold": self.thresholds, "fpr": self.fpr, "tpr": self.tpr}, columns=ROC_COLUMNS)


def _check_inputs(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InvalidArgumentError(f"{scores.size} scores but {labels.size} labels.")
    if not np.all(np.isin(labels, (0, 1))):
        raise InvalidArgumentError("Labels must be 0 or 1.")
    if np.any(np.isnan(scores)):
        raise InvalidArgumentError("Scores must not be NaN.")
    labels = labels.astype(bool)
    if labels.all() or not labels.any():
        raise InvalidArgumentError("Both classes must be present among the labels.")
    return scores, labels


def roc_curve(scores, labels) -> RocCurve:
    """
    ROC curve over every distinct score, highest first, with tied scores in one step.

    Args:
        scores: Damage scores; larger means more likely damaged.
        labels: Binary labels, 1 = damaged.

    Returns:
        RocCurve: Curve points and the trapezoidal AUC.

    Raises:
        InvalidArgumentError: On length mismatch, non-binary labels or a single class.
    """
    scores, labels = _check_inputs(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    scores = scores[order]
    labels = labels[order]

    # last index of every run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(scores)), scores.size - 1]
    true_positives = np.cumsum(labels)[ends]
    false_positives = (ends + 1) - true_positives

    tpr = np.r_[0.0, true_positives / labels.sum()]
    fpr = np.r_[0.0, false_positives / (~labels).sum()]
    thresholds = np.r_[np.inf, scores[ends]]
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=float(trapezoid(tpr, fpr)))


def mann_whitney_auc(scores, labels) -> float:
    """AUC as P(score of a positive > score of a negative) + 0.5 P(tie), by average ranks."""
    scores, labels = _check_inputs(scores, labels)
    ranks = pd.Series(scores).rank(method="average").to_numpy()
    positives = int(labels.sum())
    negatives = labels.size - positives
    u = ranks[labels].sum() - positives * (positives + 1) / 2.0
    return float(u / (positives * negatives))


def tpr_tnr_at(scores, labels, threshold: float) -> Tuple[float, float]:
    """True-positive and true-negative rates when predicting damage for score >= threshold."""
    scores, labels = _check_inputs(scores, labels)
    predicted = scores >= threshold
    tpr = np.count_nonzero(predicted & labels) / np.count_nonzero(labels)
    tnr = np.count_nonzero(~predicted & ~labels) / np.count_nonzero(~labels)
    return float(tpr), float(tnr)


def youden_threshold(curve: RocCurve) -> float:
    """Threshold maximizing TPR - FPR; the first finite one wins ties."""
    j = curve.tpr - curve.fpr
    j[~np.isfinite(curve.thresholds)] = -np.inf
    return float(curve.thresholds[int(np.argmax(j))])


@dataclass(frozen=True)
class ScoreSummary:
    """AUC and rates at the Youden-optimal threshold for one set of scores."""

    name: str
    auc: float
    threshold: float
    tpr: float
    tnr: float
    count: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "auc": self.auc,
            "threshold": self.threshold,
            "tpr": self.tpr,
            "tnr": self.tnr,
            "count": self.count,
        }


def summarize_scores(name: str, scores, labels) -> Tuple[ScoreSummary, RocCurve]:
    curve = roc_curve(scores, labels)
    threshold = youden_threshold(curve)
    tpr, tnr = tpr_tnr_at(scores, labels, threshold)
    summary = ScoreSummary(name=name, auc=curve.auc, threshold=threshold, tpr=tpr, tnr=tnr, count=int(np.size(labels)))
    return summary, curve
