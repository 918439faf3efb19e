"""Binary classification metrics, curves, and paired statistical tests.

Zero-denominator conventions are fixed: a per-class precision/recall/F1
term with an empty denominator contributes 0, MCC with any zero factor
under the root is 0, and kappa with chance agreement 1 is 0.  The t-test
p-value is computed internally through the regularized incomplete beta
function (continued-fraction evaluation), with no stats dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import List, Sequence, Tuple

import numpy as np


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricsReport:
    maP: float
    maR: float
    maF1: float
    accuracy: float
    roc_auc: float
    mcc: float
    kappa: float
    confusion: ConfusionMatrix

    def as_dict(self) -> dict:
        out = asdict(self)
        out["confusion"] = asdict(self.confusion)
        return out


METRIC_FIELDS = ("maP", "maR", "maF1", "accuracy", "roc_auc", "mcc", "kappa")


def confusion(labels, preds) -> ConfusionMatrix:
    labels = np.asarray(labels).astype(int)
    preds = np.asarray(preds).astype(int)
    if labels.shape != preds.shape:
        raise ValueError("labels and predictions differ in length")
    return ConfusionMatrix(
        tp=int(np.sum((labels == 1) & (preds == 1))),
        fp=int(np.sum((labels == 0) & (preds == 1))),
        fn=int(np.sum((labels == 1) & (preds == 0))),
        tn=int(np.sum((labels == 0) & (preds == 0))),
    )


def _safe_div(num, den):
    return num / den if den else 0.0


def macro_scores(cm: ConfusionMatrix) -> Tuple[float, float, float, float]:
    """(maP, maR, maF1, accuracy) averaging the two class orientations."""
    # class 1 as positive, then class 0 as positive
    views = [(cm.tp, cm.fp, cm.fn), (cm.tn, cm.fn, cm.fp)]
    precs, recs, f1s = [], [], []
    for tp, fp, fn in views:
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        precs.append(p)
        recs.append(r)
        f1s.append(_safe_div(2 * p * r, p + r))
    accuracy = _safe_div(cm.tp + cm.tn, cm.total)
    return (float(np.mean(precs)), float(np.mean(recs)),
            float(np.mean(f1s)), accuracy)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic: P(score+ > score-) + P(tie)/2, via average
    ranks so ties are exact."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def roc_curve(scores, labels) -> List[Tuple[float, float, float]]:
    """(threshold, fpr, tpr) points from a descending threshold sweep."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="stable")
    points = [(math.inf, 0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        for idx in order[i:j + 1]:
            if labels[idx] == 1:
                tp += 1
            else:
                fp += 1
        points.append((float(scores[order[i]]),
                       _safe_div(fp, n_neg), _safe_div(tp, n_pos)))
        i = j + 1
    return points


def mcc(cm: ConfusionMatrix) -> float:
    num = cm.tp * cm.tn - cm.fp * cm.fn
    factors = [(cm.tp + cm.fp), (cm.tp + cm.fn), (cm.tn + cm.fp), (cm.tn + cm.fn)]
    if any(f == 0 for f in factors):
        return 0.0
    return num / math.sqrt(math.prod(float(f) for f in factors))


def kappa(cm: ConfusionMatrix) -> float:
    n = cm.total
    if n == 0:
        return 0.0
    p_o = (cm.tp + cm.tn) / n
    p_e = ((cm.tp + cm.fp) * (cm.tp + cm.fn)
           + (cm.tn + cm.fn) * (cm.tn + cm.fp)) / (n * n)
    if p_e == 1.0:
        return 0.0
    return (p_o - p_e) / (1.0 - p_e)


def full_report(labels, preds, scores) -> MetricsReport:
    cm = confusion(labels, preds)
    map_, mar, maf1, acc = macro_scores(cm)
    return MetricsReport(maP=map_, maR=mar, maF1=maf1, accuracy=acc,
                         roc_auc=roc_auc(scores, labels), mcc=mcc(cm),
                         kappa=kappa(cm), confusion=cm)


def calibration_curve(probs, labels, bins: int = 10):
    """Equal-width reliability bins on [0, 1]; empty bins are omitted.
    Returns (mean predicted, fraction positive, count) triples."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if probs.size and (probs.min() < 0 or probs.max() > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    which = np.minimum((probs * bins).astype(int), bins - 1)
    rows = []
    for b in range(bins):
        mask = which == b
        count = int(mask.sum())
        if count == 0:
            continue
        rows.append((float(probs[mask].mean()), float(labels[mask].mean()), count))
    return rows


# --- regularized incomplete beta (for the t-distribution CDF) -------------

def _betacf(a: float, b: float, x: float) -> float:
    max_iter, eps, tiny = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-tailed tail probability of Student's t."""
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


class DegenerateTestError(ValueError):
    pass


def paired_t_test(a: Sequence[float], b: Sequence[float]):
    """Two-tailed paired t-test; returns (t, p, cohens_d, df)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("paired_t_test needs two equal-length vectors, k >= 2")
    d = a - b
    k = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateTestError("zero-variance differences: t is undefined")
    t = mean / (sd / math.sqrt(k))
    p = t_sf_two_sided(t, k - 1)
    return t, p, mean / sd, k - 1


def bonferroni(alpha: float, m: int) -> float:
    if m < 1:
        raise ValueError("m must be positive")
    return alpha / m
