"""Heart-disease CSV ingestion and the preprocessing pipeline.

Expected header:
Age,Sex,ChestPainType,RestingBP,Cholesterol,FastingBS,RestingECG,MaxHR,
ExerciseAngina,Oldpeak,ST_Slope,HeartDisease

Fixed ordinal code tables (scaled into [0,1] downstream):
    Sex: M=0, F=1            ExerciseAngina: N=0, Y=1
    ChestPainType: ASY=0, ATA=1, NAP=2, TA=3
    RestingECG: Normal=0, ST=1, LVH=2
    ST_Slope: Down=0, Flat=1, Up=2
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from . import models, ndcore
from .rng import RngStream


class SchemaError(ValueError):
    pass


class ParseError(ValueError):
    pass


class ImputationError(ValueError):
    pass


HEADER = ["Age", "Sex", "ChestPainType", "RestingBP", "Cholesterol", "FastingBS",
          "RestingECG", "MaxHR", "ExerciseAngina", "Oldpeak", "ST_Slope",
          "HeartDisease"]

CATEGORIES = {
    "Sex": ["M", "F"],
    "ChestPainType": ["ASY", "ATA", "NAP", "TA"],
    "RestingECG": ["Normal", "ST", "LVH"],
    "ExerciseAngina": ["N", "Y"],
    "ST_Slope": ["Down", "Flat", "Up"],
}

NUMERIC = ["Age", "RestingBP", "Cholesterol", "FastingBS", "MaxHR", "Oldpeak"]
CONTINUOUS = ["Age", "RestingBP", "Cholesterol", "MaxHR", "Oldpeak"]
MULTI_CATEGORY = ["ChestPainType", "RestingECG", "ST_Slope"]

_FIELD_ORDER = HEADER[:-1]


@dataclass
class RawRecord:
    """One CSV row; None marks a missing value.  The label is never missing."""

    age: Optional[float]
    sex: Optional[str]
    chest_pain_type: Optional[str]
    resting_bp: Optional[float]
    cholesterol: Optional[float]
    fasting_bs: Optional[float]
    resting_ecg: Optional[str]
    max_hr: Optional[float]
    exercise_angina: Optional[str]
    oldpeak: Optional[float]
    st_slope: Optional[str]
    heart_disease: int

    _ATTRS = ["age", "sex", "chest_pain_type", "resting_bp", "cholesterol",
              "fasting_bs", "resting_ecg", "max_hr", "exercise_angina",
              "oldpeak", "st_slope"]

    def get(self, column: str):
        return getattr(self, self._ATTRS[_FIELD_ORDER.index(column)])

    def key(self):
        return tuple(getattr(self, a) for a in self._ATTRS) + (self.heart_disease,)


@dataclass
class FeatureMatrix:
    values: np.ndarray
    labels: np.ndarray
    column_names: List[str]
    column_kinds: List[str]
    scaler: Optional[list] = None  # per-column (min, max) or None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.values.shape[0] != self.labels.shape[0]:
            raise ndcore.ShapeError("row count differs from label count")
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ndcore.NonFiniteError("feature matrix holds non-finite entries")

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    def take(self, idx) -> "FeatureMatrix":
        return replace(self, values=self.values[idx], labels=self.labels[idx])


@dataclass
class SplitSpec:
    ratio: float = 0.8
    seed: int = 0
    k_folds: int = 10

    def __post_init__(self):
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("split ratio must be in (0, 1)")
        if self.k_folds < 1:
            raise ValueError("k_folds must be positive")


def _parse_cell(column: str, raw: str, row_no: int, sentinel_zero: bool):
    text = raw.strip() if raw is not None else ""
    if text == "":
        return None
    if column in CATEGORIES:
        if text not in CATEGORIES[column]:
            raise ParseError(f"row {row_no}: unknown {column} value {text!r}")
        return text
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row_no}: bad numeric {column} value {text!r}") from None
    if sentinel_zero and column in ("Cholesterol", "RestingBP") and value == 0:
        return None
    return value


def load_records(path, sentinel_zero_missing: bool = True) -> List[RawRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if [h.strip() for h in header] != HEADER:
            raise SchemaError(f"{path}: header must be {','.join(HEADER)}")
        records = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(HEADER):
                raise ParseError(f"row {row_no}: expected {len(HEADER)} cells, got {len(row)}")
            cells = {}
            for col, raw in zip(HEADER[:-1], row[:-1]):
                cells[col] = _parse_cell(col, raw, row_no, sentinel_zero_missing)
            label_text = row[-1].strip()
            if label_text not in ("0", "1"):
                raise ParseError(f"row {row_no}: label must be 0 or 1, got {label_text!r}")
            records.append(RawRecord(
                age=cells["Age"], sex=cells["Sex"],
                chest_pain_type=cells["ChestPainType"], resting_bp=cells["RestingBP"],
                cholesterol=cells["Cholesterol"], fasting_bs=cells["FastingBS"],
                resting_ecg=cells["RestingECG"], max_hr=cells["MaxHR"],
                exercise_angina=cells["ExerciseAngina"], oldpeak=cells["Oldpeak"],
                st_slope=cells["ST_Slope"], heart_disease=int(label_text)))
    return records


def deduplicate(records: Sequence[RawRecord]) -> List[RawRecord]:
    """Drop exact duplicates (all fields equal), keeping first occurrences."""
    seen = set()
    out = []
    for rec in records:
        key = rec.key()
        if key not in seen:
            seen.add(key)
            out.append(rec)
    return out


def _median_low(values: List[float]) -> float:
    """Median with the lower of the two middle elements on even counts."""
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def _mode_first(values: List[str]) -> str:
    counts = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return sorted(v for v, c in counts.items() if c == best)[0]


def impute_missing(records: Sequence[RawRecord]) -> List[RawRecord]:
    fills = {}
    for column in _FIELD_ORDER:
        present = [r.get(column) for r in records if r.get(column) is not None]
        if not present:
            raise ImputationError(f"column {column} is entirely missing")
        fills[column] = (_mode_first(present) if column in CATEGORIES
                         else _median_low(present))
    out = []
    for rec in records:
        patched = {attr: (fills[col] if rec.get(col) is None else rec.get(col))
                   for col, attr in zip(_FIELD_ORDER, RawRecord._ATTRS)}
        out.append(RawRecord(**patched, heart_disease=rec.heart_disease))
    return out


def encode_features(records: Sequence[RawRecord], mode: str = "ordinal") -> FeatureMatrix:
    if mode not in ("ordinal", "one_hot"):
        raise ValueError(f"unknown encoding mode {mode!r}")
    for rec in records:
        for col in _FIELD_ORDER:
            if rec.get(col) is None:
                raise ValueError("encode_features requires imputed records")
    names, kinds, columns = [], [], []
    for col in _FIELD_ORDER:
        if col in CATEGORIES:
            codes = {c: i for i, c in enumerate(CATEGORIES[col])}
            raw = [codes[rec.get(col)] for rec in records]
            if mode == "one_hot" and col in MULTI_CATEGORY:
                for i, cat in enumerate(CATEGORIES[col]):
                    names.append(f"{col}_{cat}")
                    kinds.append("one-hot")
                    columns.append([1.0 if v == i else 0.0 for v in raw])
            else:
                names.append(col)
                kinds.append("binary" if len(codes) == 2 else "ordinal-encoded")
                columns.append([float(v) for v in raw])
        else:
            names.append(col)
            kinds.append("binary" if col == "FastingBS" else "continuous")
            columns.append([float(rec.get(col)) for rec in records])
    values = (np.array(columns, dtype=np.float64).T if columns
              else np.zeros((0, 0)))
    if not records:
        values = np.zeros((0, len(names)))
    labels = np.array([rec.heart_disease for rec in records], dtype=np.int64)
    return FeatureMatrix(values, labels, names, kinds)


def iqr_bounds(values: np.ndarray, cols: Sequence[int]) -> dict:
    """Per-column winsorizing bounds Q1 - 1.5 IQR, Q3 + 1.5 IQR; quartiles
    by linear interpolation on the sorted values (type 7)."""
    bounds = {}
    for c in cols:
        q1, q3 = np.quantile(values[:, c], [0.25, 0.75])
        iqr = q3 - q1
        bounds[c] = (q1 - 1.5 * iqr, q3 + 1.5 * iqr)
    return bounds


def apply_bounds(values: np.ndarray, bounds: dict) -> np.ndarray:
    out = values.copy()
    for c, (lo, hi) in bounds.items():
        out[:, c] = np.clip(out[:, c], lo, hi)
    return out


def cap_outliers_iqr(matrix: FeatureMatrix, columns: Sequence[str] | None = None) -> FeatureMatrix:
    cols = _continuous_indices(matrix, columns)
    bounds = iqr_bounds(matrix.values, cols)
    return replace(matrix, values=apply_bounds(matrix.values, bounds))


def _continuous_indices(matrix: FeatureMatrix, columns=None):
    if columns is not None:
        return [matrix.column_names.index(c) for c in columns]
    return [i for i, kind in enumerate(matrix.column_kinds) if kind == "continuous"]


def _scaled_indices(matrix: FeatureMatrix):
    return [i for i, kind in enumerate(matrix.column_kinds)
            if kind in ("continuous", "ordinal-encoded")]


def scale_minmax(matrix: FeatureMatrix):
    """Fit x' = (x - min)/(max - min) on continuous and ordinal columns
    (binary and indicator columns are already 0/1); constant columns map
    to zero.  Returns (scaled matrix, per-column scaler list)."""
    scaler: list = [None] * matrix.n_cols
    values = matrix.values.copy()
    for c in _scaled_indices(matrix):
        lo, hi = float(values[:, c].min()), float(values[:, c].max())
        scaler[c] = (lo, hi)
        values[:, c] = 0.0 if hi == lo else (values[:, c] - lo) / (hi - lo)
    out = replace(matrix, values=values, scaler=scaler)
    return out, scaler


def apply_scaler(matrix: FeatureMatrix, scaler: list) -> FeatureMatrix:
    values = matrix.values.copy()
    for c, pair in enumerate(scaler):
        if pair is None:
            continue
        lo, hi = pair
        values[:, c] = 0.0 if hi == lo else (values[:, c] - lo) / (hi - lo)
    return replace(matrix, values=values, scaler=scaler)


def smote_balance(values: np.ndarray, labels: np.ndarray, k: int = 5,
                  rng: RngStream | None = None):
    """Upsample the minority class to the majority count with synthetic
    points x + u (x_nn - x), u ~ U[0,1], x_nn one of the k nearest minority
    neighbors (Euclidean)."""
    rng = rng or RngStream(0, 0)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size != 2:
        raise ValueError("smote_balance expects exactly two classes")
    minority = classes[np.argmin(counts)]
    n_min, n_maj = counts.min(), counts.max()
    if n_min == n_maj:
        return values.copy(), labels.copy()
    if n_min <= k:
        raise ValueError(f"minority count {n_min} must exceed k={k}")
    idx_min = np.where(labels == minority)[0]
    x_min = values[idx_min]
    d2 = ((x_min[:, None, :] - x_min[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
    n_new = n_maj - n_min
    base = rng.integers(0, n_min, (n_new,))
    pick = rng.integers(0, k, (n_new,))
    u = rng.uniform01((n_new, 1))
    anchors = x_min[base]
    partners = x_min[nn[base, pick]]
    synthetic = anchors + u * (partners - anchors)
    new_values = np.vstack([values, synthetic])
    new_labels = np.concatenate([labels, np.full(n_new, minority, dtype=labels.dtype)])
    return new_values, new_labels


DEFAULT_INTERACTIONS = [("Age", "MaxHR"), ("ChestPainType", "ExerciseAngina")]


def add_interactions(matrix: FeatureMatrix,
                     pairs: Sequence[tuple] = tuple(DEFAULT_INTERACTIONS)) -> FeatureMatrix:
    values = matrix.values
    names = list(matrix.column_names)
    kinds = list(matrix.column_kinds)
    new_cols = []
    for a, b in pairs:
        if a not in names or b not in names:
            raise KeyError(f"unknown interaction column in ({a}, {b})")
        new_cols.append(values[:, names.index(a)] * values[:, names.index(b)])
        names.append(f"{a}*{b}")
        kinds.append("continuous")
    if new_cols:
        values = np.column_stack([values] + new_cols)
    scaler = None if matrix.scaler is None else matrix.scaler + [None] * len(new_cols)
    return FeatureMatrix(values, matrix.labels.copy(), names, kinds, scaler)


def _per_class_indices(labels: np.ndarray, seed: int):
    stream = RngStream(seed, 71)
    out = {}
    for i, cls in enumerate(np.unique(labels)):
        idx = np.where(labels == cls)[0]
        out[cls] = idx[stream.child(i).permutation(idx.size)]
    return out


def stratified_split(matrix: FeatureMatrix, spec: SplitSpec):
    """Deterministic class-proportional split; returns (train, test)."""
    labels = matrix.labels
    for cls, count in zip(*np.unique(labels, return_counts=True)):
        if count < 2:
            raise ValueError(f"class {cls} has fewer than 2 samples")
    train_idx, test_idx = [], []
    for cls, idx in _per_class_indices(labels, spec.seed).items():
        n_train = int(np.floor(spec.ratio * idx.size + 0.5))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return matrix.take(train_idx), matrix.take(test_idx)


def stratified_folds(labels: np.ndarray, k: int, seed: int):
    """Class-proportional k-fold partition; returns (train_idx, test_idx) pairs."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be at least 2")
    _, counts = np.unique(labels, return_counts=True)
    if k > counts.min():
        raise ValueError(f"k={k} exceeds the minority class count {counts.min()}")
    fold_members = [[] for _ in range(k)]
    offset = 0
    for cls, idx in _per_class_indices(labels, seed).items():
        for pos, sample in enumerate(idx):
            fold_members[(pos + offset) % k].append(sample)
        offset += idx.size % k
    folds = []
    everything = np.arange(labels.size)
    for members in fold_members:
        test = np.sort(np.array(members, dtype=np.int64))
        mask = np.ones(labels.size, dtype=bool)
        mask[test] = False
        folds.append((everything[mask], test))
    return folds


def train_baseline(train_matrix: FeatureMatrix, seed: int = 0,
                   steps: int = 400, lr: float = 0.05) -> models.Model:
    """Full-batch Adam logistic fit used for probability augmentation."""
    from . import train as train_mod  # deferred: train also imports dataset

    rng = RngStream(seed, 977)
    model = models.build("logistic", models.Hyperparams(), rng,
                         n_features=train_matrix.n_cols)
    adam = ndcore.AdamState(learning_rate=lr)
    x, y = train_matrix.values, train_matrix.labels
    for step in range(steps):
        probs, cache = model.forward(x, "train", rng.child(step))
        _, grad = train_mod.bce_loss(probs, y)
        model.set_params(ndcore.adam_step(adam, model.params(), model.backward(cache, grad)))
    return model


def augment_with_baseline(train_matrix: FeatureMatrix, test_matrix: FeatureMatrix,
                          seed: int = 0):
    """Append the baseline's class-1 probability as one extra column to
    both matrices; the baseline is fit on the training matrix only."""
    baseline = train_baseline(train_matrix, seed)

    def extend(matrix):
        probs, _ = baseline.forward(matrix.values, "infer")
        col = models.class_one_score(probs)[:, None]
        scaler = None if matrix.scaler is None else matrix.scaler + [None]
        return FeatureMatrix(np.hstack([matrix.values, col]), matrix.labels.copy(),
                             matrix.column_names + ["BaselineProb"],
                             matrix.column_kinds + ["continuous"], scaler)

    return extend(train_matrix), extend(test_matrix)


@dataclass
class PipelineConfig:
    encoding: str = "ordinal"
    sentinel_zero_missing: bool = True
    smote: bool = True
    smote_k: int = 5
    interactions: bool = False
    augment: bool = False
    ratio: float = 0.8
    seed: int = 0


def run_pipeline(records: Sequence[RawRecord], config: PipelineConfig):
    """Full deterministic path from raw records to train/test matrices.

    SMOTE, capping, and scaling are fit on the training partition only;
    imputation statistics come from the deduplicated pool.
    """
    records = impute_missing(deduplicate(records))
    matrix = encode_features(records, config.encoding)
    train_fm, test_fm = stratified_split(matrix, SplitSpec(config.ratio, config.seed))
    cont = _continuous_indices(train_fm)
    bounds = iqr_bounds(train_fm.values, cont)
    train_fm = replace(train_fm, values=apply_bounds(train_fm.values, bounds))
    test_fm = replace(test_fm, values=apply_bounds(test_fm.values, bounds))
    train_fm, scaler = scale_minmax(train_fm)
    test_fm = apply_scaler(test_fm, scaler)
    if config.smote:
        values, labels = smote_balance(train_fm.values, train_fm.labels,
                                       config.smote_k, RngStream(config.seed, 311))
        train_fm = FeatureMatrix(values, labels, train_fm.column_names,
                                 train_fm.column_kinds, train_fm.scaler)
    if config.interactions:
        train_fm = add_interactions(train_fm)
        test_fm = add_interactions(test_fm)
    if config.augment:
        train_fm, test_fm = augment_with_baseline(train_fm, test_fm, config.seed)
    info = {
        "encoding": config.encoding, "seed": config.seed,
        "n_train": int(train_fm.n_rows), "n_test": int(test_fm.n_rows),
        "n_features": int(train_fm.n_cols),
        "columns": train_fm.column_names,
        "scaler": [list(p) if p else None for p in scaler],
        "iqr_bounds": {train_fm.column_names[c]: list(b) for c, b in bounds.items()},
        "smote": config.smote, "interactions": config.interactions,
        "augment": config.augment,
    }
    return train_fm, test_fm, info
