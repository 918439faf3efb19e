"""Deterministic synthetic heart-disease CSV generator.

Produces a file with the exact production schema (12-name header, five
category tables, sentinel zeros in Cholesterol/RestingBP) for offline
runs and the test suite: 1190 rows containing exactly 272 duplicate
copies of earlier rows, so deduplication yields 918 unique records with
a 508/410 label split.  Feature distributions are sampled conditionally
on the label with effect sizes close to the public merged dataset, which
makes the task learnable to roughly the same accuracy band.
"""

from __future__ import annotations

import csv

import numpy as np

from .dataset import HEADER
from .rng import RngStream


def _pick(stream_u: float, options, probs) -> str:
    edges = np.cumsum(probs)
    return options[int(np.searchsorted(edges, stream_u * edges[-1]))]


def _row(u: RngStream, y: int) -> tuple:
    draw = u.uniform01((8,))
    sex = _pick(draw[0], ["M", "F"], [0.85, 0.15] if y else [0.68, 0.32])
    age = int(np.clip(round(u.normal(55.0 if y else 51.0, 8.9 if y else 9.4)), 28, 77))
    chest = _pick(draw[1], ["ASY", "ATA", "NAP", "TA"],
                  [0.72, 0.07, 0.14, 0.07] if y else [0.27, 0.34, 0.31, 0.08])
    resting_bp = int(np.clip(round(u.normal(133 if y else 130, 19 if y else 17)), 92, 200))
    if draw[2] < (0.22 if y else 0.06):
        chol = 0  # sentinel for a missing lab value
    else:
        chol = int(np.clip(round(u.normal(244 if y else 238, 55)), 85, 603))
    fasting = 1 if draw[3] < (0.30 if y else 0.15) else 0
    ecg = _pick(draw[4], ["Normal", "ST", "LVH"],
                [0.58, 0.21, 0.21] if y else [0.65, 0.15, 0.20])
    max_hr = int(np.clip(round(205 - 0.55 * age + u.normal(-10.0 if y else 2.0, 20.0)),
                         60, 202))
    angina = "Y" if draw[5] < (0.60 if y else 0.15) else "N"
    oldpeak = float(np.clip(round(u.normal(1.22 if y else 0.45, 1.1 if y else 0.72), 1),
                            -2.6, 6.2))
    slope = _pick(draw[6], ["Up", "Flat", "Down"],
                  [0.17, 0.70, 0.13] if y else [0.74, 0.23, 0.03])
    return (age, sex, chest, resting_bp, chol, fasting, ecg, max_hr,
            angina, oldpeak, slope, y)


def generate_rows(seed: int = 7, n_unique: int = 918, n_total: int = 1190,
                  n_positive: int = 508):
    """Row tuples in HEADER order: n_unique distinct rows plus duplicates."""
    stream = RngStream(seed, 2024)
    labels = np.zeros(n_unique, dtype=int)
    labels[:n_positive] = 1
    labels = labels[stream.child(0).permutation(n_unique)]
    seen = set()
    rows = []
    draw_id = 1
    for y in labels:
        for _ in range(64):
            row = _row(stream.child(draw_id), int(y))
            draw_id += 1
            if row not in seen:
                seen.add(row)
                rows.append(row)
                break
        else:
            raise RuntimeError("could not generate a distinct row")
    # one RestingBP sentinel zero, mirroring the lone bad reading upstream
    victim = int(stream.child(draw_id).integers(0, n_unique, (1,))[0])
    row = list(rows[victim])
    row[3] = 0
    rows[victim] = tuple(row)

    n_dupes = n_total - n_unique
    dup_sources = stream.child(draw_id + 1).integers(0, n_unique, (n_dupes,))
    all_rows = rows + [rows[i] for i in dup_sources]
    order = stream.child(draw_id + 2).permutation(len(all_rows))
    return [all_rows[i] for i in order]


def write_csv(path, seed: int = 7, n_unique: int = 918, n_total: int = 1190,
              n_positive: int = 508) -> None:
    rows = generate_rows(seed, n_unique, n_total, n_positive)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for row in rows:
            writer.writerow(row)
