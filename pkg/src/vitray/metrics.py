"""Binary classification metrics: confusion matrix, summary scores, ROC/AUC.

Label 1 (Abnormal) is the positive class unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError, UndefinedMetricError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_class: int = 1

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_array(self) -> np.ndarray:
        """Counts indexed ``[actual label, predicted label]``."""
        by_role = np.array([[self.tn, self.fp], [self.fn, self.tp]])
        return by_role if self.positive_class == 1 else by_role[::-1, ::-1]


@dataclass(frozen=True)
class Summary:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: tuple[str, ...] = field(default=())


@dataclass(frozen=True)
class RocCurve:
    points: list  # (fpr, tpr, threshold), thresholds descending
    auc: float

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def _pair(preds, labels):
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ContractError(f"predictions {preds.shape} and labels {labels.shape} must be equal-length vectors")
    if preds.size == 0:
        raise ContractError("need at least one sample")
    return preds, labels


def confusion(preds: Sequence[int], labels: Sequence[int], positive_class: int = 1) -> ConfusionMatrix:
    preds, labels = _pair(preds, labels)
    pp, ap = preds == positive_class, labels == positive_class
    return ConfusionMatrix(
        int(np.sum(pp & ap)), int(np.sum(pp & ~ap)), int(np.sum(~pp & ap)), int(np.sum(~pp & ~ap)), positive_class
    )


def accuracy(preds: Sequence[int], labels: Sequence[int]) -> float:
    preds, labels = _pair(preds, labels)
    return float(np.mean(preds == labels))


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both inputs are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def summary(cm: ConfusionMatrix) -> Summary:
    """Accuracy, precision, recall, F1. A 0/0 ratio becomes 0 and is named in ``degenerate``."""
    if cm.total <= 0:
        raise ContractError("confusion matrix is empty")
    flags = []

    def ratio(num, den, name):
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
    if precision + recall == 0:
        flags.append("f1")
    return Summary((cm.tp + cm.tn) / cm.total, precision, recall, f1_score(precision, recall), tuple(flags))


def _split_scores(scores, labels, positive_class):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractError("scores and labels must be equal-length vectors")
    if np.any(~np.isfinite(scores)) or np.any((scores < 0) | (scores > 1)):
        raise ContractError("scores must lie in [0, 1]")
    pos = labels == positive_class
    if pos.all() or not pos.any():
        raise UndefinedMetricError("ROC/AUC needs both positive and negative samples")
    return scores, pos


def roc(scores: Sequence[float], labels: Sequence[int], positive_class: int = 1) -> RocCurve:
    """ROC curve over every distinct score, plus a sentinel threshold of +inf.

    A sample is called positive when its score is >= the threshold, so tied
    scores move together and produce one diagonal step. The trapezoidal area
    is accumulated in integer counts, which makes it equal the Mann-Whitney
    statistic exactly.
    """
    scores, pos = _split_scores(scores, labels, positive_class)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    cum_tp = np.cumsum(p)
    cum_fp = np.cumsum(~p)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tps = [0] + [int(cum_tp[i]) for i in ends]
    fps = [0] + [int(cum_fp[i]) for i in ends]
    thresholds = [math.inf] + [float(s[i]) for i in ends]
    twice_area = sum((fps[i] - fps[i - 1]) * (tps[i] + tps[i - 1]) for i in range(1, len(tps)))
    points = [(fp / n_neg, tp / n_pos, t) for fp, tp, t in zip(fps, tps, thresholds)]
    return RocCurve(points, twice_area / (2 * n_pos * n_neg))


def auc_pairwise_oracle(scores: Sequence[float], labels: Sequence[int], positive_class: int = 1) -> float:
    """AUC by exhaustive comparison of every (positive, negative) pair; ties count half."""
    scores, pos = _split_scores(scores, labels, positive_class)
    sp, sn = scores[pos][:, None], scores[~pos][None, :]
    wins = int(np.sum(sp > sn))
    ties = int(np.sum(sp == sn))
    return (wins + 0.5 * ties) / (sp.size * sn.size)


def percent(value: float | None) -> str:
    """Report formatting: a fraction as a percentage with 2 decimals."""
    return "n/a" if value is None else f"{100 * value:.2f}%"


def roc_csv(curve: RocCurve) -> str:
    lines = ["threshold,fpr,tpr"]
    lines += [f"{t!r},{fpr!r},{tpr!r}" for fpr, tpr, t in curve.points]
    return "\n".join(lines) + "\n"


def confusion_csv(cm: ConfusionMatrix) -> str:
    """Counts per (actual, predicted) cell plus the fraction of each actual class."""
    counts = cm.as_array()
    lines = ["actual,predicted,count,fraction"]
    for actual in (0, 1):
        row_total = counts[actual].sum()
        for predicted in (0, 1):
            c = int(counts[actual, predicted])
            frac = c / row_total if row_total else 0.0
            lines.append(f"{actual},{predicted},{c},{frac:.6f}")
    return "\n".join(lines) + "\n"
