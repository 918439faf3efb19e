"""Model-agnostic attributions: exact and permutation-sampled Shapley
values, plus local linear surrogates fit on perturbation neighborhoods.

The coalition value function replaces absent features with background
column means, so v(S) is deterministic and the exact path enumerates all
2^d coalitions in one batched model call.  Attribution targets the
model's class-1 probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .rng import RngStream

PredictFn = Callable[[np.ndarray], np.ndarray]  # (batch, d) -> (batch,) class-1 prob

MAX_EXACT_FEATURES = 16


@dataclass
class Attribution:
    values: np.ndarray
    base_value: float
    fx: float
    standard_errors: Optional[np.ndarray] = None

    def efficiency_gap(self) -> float:
        return float(self.fx - self.base_value - self.values.sum())


@dataclass
class LocalSurrogate:
    weights: np.ndarray
    intercept: float
    kernel_width: float
    r2: float


def _popcounts(n_bits: int) -> np.ndarray:
    idx = np.arange(1 << n_bits, dtype=np.uint32)
    counts = np.zeros_like(idx)
    for b in range(n_bits):
        counts += (idx >> b) & 1
    return counts.astype(np.int64)


def shapley_exact(predict_fn: PredictFn, x: np.ndarray,
                  background: np.ndarray) -> Attribution:
    """Exact Shapley values by full coalition enumeration (d <= 16)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    d = x.size
    if d > MAX_EXACT_FEATURES:
        raise ValueError(f"{d} features exceed the exact-enumeration cap "
                         f"{MAX_EXACT_FEATURES}; use shapley_sampled")
    reference = np.asarray(background, dtype=np.float64).reshape(-1, d).mean(axis=0)
    n_subsets = 1 << d
    masks = ((np.arange(n_subsets)[:, None] >> np.arange(d)[None, :]) & 1).astype(bool)
    points = np.where(masks, x[None, :], reference[None, :])
    v = np.asarray(predict_fn(points), dtype=np.float64).ravel()
    sizes = _popcounts(d)
    # |S|! (d - |S| - 1)! / d!  indexed by |S|
    w = np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d)
                  for s in range(d)])
    phi = np.zeros(d)
    subsets = np.arange(n_subsets)
    for j in range(d):
        bit = 1 << j
        without = subsets[(subsets & bit) == 0]
        phi[j] = float(np.sum(w[sizes[without]] * (v[without | bit] - v[without])))
    return Attribution(phi, base_value=float(v[0]), fx=float(v[-1]))


def shapley_sampled(predict_fn: PredictFn, x: np.ndarray, background: np.ndarray,
                    m_permutations: int = 200, seed: int = 0) -> Attribution:
    """Permutation-sampling estimator (unbiased per feature) with
    standard errors; deterministic under seed."""
    if m_permutations < 1:
        raise ValueError("need at least one permutation")
    x = np.asarray(x, dtype=np.float64).ravel()
    d = x.size
    reference = np.asarray(background, dtype=np.float64).reshape(-1, d).mean(axis=0)
    stream = RngStream(seed, 404)
    contribs = np.zeros((m_permutations, d))
    base = float(np.asarray(predict_fn(reference[None, :])).ravel()[0])
    fx = float(np.asarray(predict_fn(x[None, :])).ravel()[0])
    for m in range(m_permutations):
        order = stream.child(m).permutation(d)
        points = np.tile(reference, (d + 1, 1))
        active = reference.copy()
        for step, j in enumerate(order, start=1):
            active[j] = x[j]
            points[step] = active
        vals = np.asarray(predict_fn(points), dtype=np.float64).ravel()
        contribs[m, order] = np.diff(vals)
    phi = contribs.mean(axis=0)
    se = (contribs.std(axis=0, ddof=1) / math.sqrt(m_permutations)
          if m_permutations > 1 else np.zeros(d))
    return Attribution(phi, base_value=base, fx=fx, standard_errors=se)


def lime_explain(predict_fn: PredictFn, x: np.ndarray, background: np.ndarray,
                 column_kinds: Sequence[str] | None = None,
                 n_samples: int = 5000, kernel_width: float | None = None,
                 ridge_lambda: float = 1e-3, seed: int = 0) -> LocalSurrogate:
    """Weighted ridge surrogate of the model around x.

    Continuous features are perturbed with Gaussian noise at the training
    column standard deviation; category-coded columns are resampled from
    the training marginals.  Sample weights are exp(-dist^2 / width^2)
    with default width 0.75 sqrt(d); the ridge penalty realizes the
    complexity term of the surrogate objective.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    background = np.asarray(background, dtype=np.float64).reshape(-1, x.size)
    d = x.size
    kinds = list(column_kinds) if column_kinds is not None else ["continuous"] * d
    if len(kinds) != d:
        raise ValueError("column_kinds length must match the feature count")
    width = kernel_width if kernel_width is not None else 0.75 * math.sqrt(d)
    stream = RngStream(seed, 505)

    samples = np.tile(x, (n_samples, 1))
    for j in range(d):
        col_stream = stream.child(j)
        if kinds[j] == "continuous":
            std = float(background[:, j].std())
            if std == 0:
                std = 1e-6
            samples[1:, j] = x[j] + col_stream.normal(0.0, std, (n_samples - 1,))
        else:
            picks = col_stream.integers(0, background.shape[0], (n_samples - 1,))
            samples[1:, j] = background[picks, j]

    y = np.asarray(predict_fn(samples), dtype=np.float64).ravel()
    dist2 = ((samples - x) ** 2).sum(axis=1)
    pi = np.exp(-dist2 / (width * width))

    design = np.hstack([np.ones((n_samples, 1)), samples])
    wd = design * pi[:, None]
    gram = design.T @ wd
    penalty = ridge_lambda * np.eye(d + 1)
    penalty[0, 0] = 0.0  # leave the intercept unpenalized
    try:
        beta = np.linalg.solve(gram + penalty, design.T @ (pi * y))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"degenerate perturbation covariance: {exc}") from exc

    fitted = design @ beta
    w_mean = float((pi * y).sum() / pi.sum())
    ss_res = float((pi * (y - fitted) ** 2).sum())
    ss_tot = float((pi * (y - w_mean) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LocalSurrogate(weights=beta[1:], intercept=float(beta[0]),
                          kernel_width=width, r2=r2)
