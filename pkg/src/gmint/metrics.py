from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def area(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fpr", "tpr"])
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
                w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])
        return path


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError(f"{len(scores)} scores for {len(labels)} labels")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    if labels.min(initial=1) == labels.max(initial=0) or len(labels) == 0:
        raise ValueError("both positive and negative labels are required")
    if np.any(np.isnan(scores)):
        raise ValueError("scores contain NaN")
    return scores, labels.astype(np.int64)


def _counts(scores, labels):
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    return np.r_[0, tp], np.r_[0, fp], np.r_[np.inf, s[ends]]


def roc_curve(scores, labels) -> RocCurve:
    """One point per distinct score threshold, plus the (0, 0) origin.

    A sample is predicted positive when its score is >= the threshold.
    """
    scores, labels = _check(scores, labels)
    tp, fp, thr = _counts(scores, labels)
    return RocCurve(fp / fp[-1], tp / tp[-1], thr)


def auc(scores, labels) -> float:
    """Trapezoidal ROC area; a tied positive/negative pair counts one half."""
    scores, labels = _check(scores, labels)
    tp, fp, _ = _counts(scores, labels)
    # integer trapezoid sum: 2 * P * N * area
    twice = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice / (2.0 * tp[-1] * fp[-1])
