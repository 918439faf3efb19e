"""Split-conformal prediction over any probability-emitting classifier.

Nonconformity score: s_i = 1 - p(true class).  The threshold is the
finite-sample-corrected empirical quantile (the ceil((n+1)(1-alpha))-th
smallest score, +inf when the rank overflows), which yields the marginal
coverage guarantee on exchangeable data.  Mondrian calibration applies
the same rule per category; the default taxonomy is the true class label,
and any caller-supplied category labeling (e.g. feature bins) works the
same way.  For binary classifiers the "score" and "lac" constructions
coincide; this is that shared implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


class CalibrationError(ValueError):
    pass


def _normalize_rows(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    totals = probs.sum(axis=1, keepdims=True)
    totals[totals == 0] = 1.0
    return probs / totals


@dataclass
class Calibration:
    mode: str
    scores: np.ndarray
    categories: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mode not in ("standard", "mondrian"):
            raise CalibrationError(f"unknown mode {self.mode!r}")
        if self.scores.size == 0:
            raise CalibrationError("empty calibration set")
        if not np.all(np.isfinite(self.scores)):
            raise CalibrationError("nonconformity scores must be finite")
        if self.mode == "mondrian":
            if self.categories is None or self.categories.shape != self.scores.shape:
                raise CalibrationError("mondrian calibration needs per-instance categories")
            for cat in np.unique(self.categories):
                if not np.any(self.categories == cat):
                    raise CalibrationError(f"empty mondrian category {cat}")


def calibrate(probs, labels, mode: str = "standard",
              categories=None) -> Calibration:
    """Score a held-out calibration set.  ``categories`` overrides the
    default mondrian taxonomy (the true class label)."""
    probs = _normalize_rows(probs)
    labels = np.asarray(labels).astype(int)
    if probs.shape[0] != labels.shape[0]:
        raise CalibrationError("probs and labels differ in length")
    if probs.shape[0] == 0:
        raise CalibrationError("empty calibration set")
    scores = 1.0 - probs[np.arange(labels.size), labels]
    cats = None
    if mode == "mondrian":
        cats = labels.copy() if categories is None else np.asarray(categories)
        if categories is None and np.unique(cats).size < 2:
            raise CalibrationError("mondrian by true class needs both classes present")
    return Calibration(mode, scores, cats)


def _quantile(scores: np.ndarray, alpha: float) -> float:
    n = scores.size
    rank = math.ceil((n + 1) * (1.0 - alpha))
    if rank > n:
        return math.inf
    return float(np.partition(scores, rank - 1)[rank - 1])


def threshold(calibration: Calibration, alpha: float):
    """Conformal quantile; a float for standard mode, {category: float}
    for mondrian.  Non-increasing in alpha."""
    if not 0.0 < alpha < 1.0:
        raise CalibrationError("alpha must lie in (0, 1)")
    if calibration.mode == "standard":
        return _quantile(calibration.scores, alpha)
    return {int(cat): _quantile(calibration.scores[calibration.categories == cat], alpha)
            for cat in np.unique(calibration.categories)}


def predict_sets(probs, qhat, class_categories=None) -> np.ndarray:
    """Boolean membership mask (n, n_classes): class c enters the set when
    1 - p(c) <= qhat (category-matched under mondrian, where candidate
    class c defaults to category c)."""
    probs = _normalize_rows(probs)
    n, n_classes = probs.shape
    if isinstance(qhat, dict):
        cats = class_categories or {c: c for c in range(n_classes)}
        per_class = np.array([qhat.get(cats[c], -math.inf) for c in range(n_classes)])
    else:
        per_class = np.full(n_classes, float(qhat))
    return (1.0 - probs) <= per_class[None, :]


@dataclass
class ConformalReport:
    error_rate: float
    avg_set_size: float
    singleton_fraction: float
    empty_count: int
    n: int

    def as_dict(self):
        return {"error_rate": self.error_rate, "avg_set_size": self.avg_set_size,
                "singleton_fraction": self.singleton_fraction,
                "empty_count": self.empty_count, "n": self.n}


def evaluate_sets(sets: np.ndarray, labels) -> ConformalReport:
    sets = np.asarray(sets, dtype=bool)
    labels = np.asarray(labels).astype(int)
    if sets.shape[0] != labels.shape[0]:
        raise ValueError("sets and labels differ in length")
    n = labels.size
    hit = sets[np.arange(n), labels]
    sizes = sets.sum(axis=1)
    return ConformalReport(
        error_rate=float(1.0 - hit.mean()) if n else 0.0,
        avg_set_size=float(sizes.mean()) if n else 0.0,
        singleton_fraction=float(np.mean(sizes == 1)) if n else 0.0,
        empty_count=int(np.sum(sizes == 0)),
        n=n,
    )


def conformal_table(cal_probs, cal_labels, test_probs, test_labels,
                    alphas=(0.05, 0.1, 0.2)) -> List[dict]:
    """Per-alpha standard and mondrian reports (the export behind the
    coverage/size comparison table)."""
    rows = []
    for mode in ("standard", "mondrian"):
        cal = calibrate(cal_probs, cal_labels, mode)
        for alpha in alphas:
            qhat = threshold(cal, alpha)
            sets = predict_sets(test_probs, qhat)
            report = evaluate_sets(sets, test_labels)
            row = {"mode": mode, "alpha": alpha, **report.as_dict()}
            if isinstance(qhat, dict):
                row["qhat"] = {str(k): v for k, v in qhat.items()}
            else:
                row["qhat"] = qhat
            rows.append(row)
    return rows


def score_histogram(calibration: Calibration, alphas=(0.2, 0.1, 0.05),
                    bins: int = 20):
    """Histogram of calibration scores plus the per-alpha quantile markers
    (the data behind the score-distribution figure)."""
    counts, edges = np.histogram(calibration.scores, bins=bins, range=(0.0, 1.0))
    markers = {alpha: threshold(calibration, alpha) for alpha in alphas}
    return {"bin_edges": edges.tolist(), "counts": counts.tolist(),
            "quantiles": markers}
