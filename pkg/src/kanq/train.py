"""Loss, the callback-driven fit loop, cross-validation, and tuning.

The fit loop mirrors the reference protocol: mini-batch Adam, snapshot on
validation-accuracy improvement, halve the learning rate after five
stale-validation-loss epochs (restoring the best weights first), stop
after ten stale epochs, return the best snapshot.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace as dc_replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import dataset as ds
from . import metrics as metrics_mod
from . import models, ndcore
from .rng import RngStream

_CLAMP = 1e-12


@dataclass
class TrainConfig:
    max_epochs: int = 100
    learning_rate: float = 0.001
    batch_size: int = 32
    lr_factor: float = 0.5
    lr_patience: int = 5
    early_stop_patience: int = 10
    seed: int = 0
    improvement_tol: float = 1e-6
    grid_updates: bool = True

    def __post_init__(self):
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be positive")
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError("lr_factor must lie in (0, 1)")


@dataclass
class History:
    epochs: List[dict] = field(default_factory=list)
    best_epoch: int = -1
    wall_clock_seconds: float = 0.0

    def lr_trace(self):
        return [row["lr"] for row in self.epochs]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "lr", "train_loss", "train_accuracy",
                             "val_loss", "val_accuracy"])
            for row in self.epochs:
                writer.writerow([row["epoch"], repr(row["lr"]),
                                 repr(row["train_loss"]), repr(row["train_accuracy"]),
                                 repr(row["val_loss"]), repr(row["val_accuracy"])])

    def summary(self) -> dict:
        best = self.epochs[self.best_epoch] if 0 <= self.best_epoch < len(self.epochs) else None
        return {
            "n_epochs": len(self.epochs),
            "best_epoch": self.best_epoch,
            "best_val_accuracy": best["val_accuracy"] if best else None,
            "final_lr": self.epochs[-1]["lr"] if self.epochs else None,
        }


def bce_loss(probs: np.ndarray, labels: np.ndarray):
    """Two-output binary cross-entropy against one-hot targets.

    loss = -mean_b mean_k [t_k log p_k + (1 - t_k) log(1 - p_k)], with
    probabilities clamped to [1e-12, 1 - 1e-12]; the gradient is zero at
    clamped entries (the clamped loss is locally flat there).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    targets = np.zeros_like(probs)
    targets[np.arange(labels.size), labels.astype(int)] = 1.0
    clamped = np.clip(probs, _CLAMP, 1.0 - _CLAMP)
    loss = -np.mean(targets * np.log(clamped) + (1 - targets) * np.log1p(-clamped))
    grad = (-targets / clamped + (1 - targets) / (1 - clamped)) / probs.size
    grad[(probs < _CLAMP) | (probs > 1.0 - _CLAMP)] = 0.0
    return float(loss), grad


def _as_xy(data):
    if isinstance(data, ds.FeatureMatrix):
        return data.values, data.labels
    x, y = data
    return np.asarray(x, dtype=np.float64), np.asarray(y)


def _accuracy(probs, labels):
    return float(np.mean(models.predict_labels(probs) == labels))


def _internal_val_split(x, y, seed):
    fm = ds.FeatureMatrix(x, y, [f"f{i}" for i in range(x.shape[1])],
                          ["continuous"] * x.shape[1])
    tr, va = ds.stratified_split(fm, ds.SplitSpec(0.8, seed))
    return (tr.values, tr.labels), (va.values, va.labels)


def evaluate_probs(model: models.Model, x: np.ndarray):
    probs, _ = model.forward(x, "infer")
    return probs


def fit(model: models.Model, train_data, val_data=None,
        config: TrainConfig | None = None):
    """Train in place and return (model restored to its best snapshot, History)."""
    config = config or TrainConfig()
    x_train, y_train = _as_xy(train_data)
    if x_train.shape[0] == 0:
        raise ValueError("empty training set")
    if val_data is None:
        (x_train, y_train), val_data = _internal_val_split(x_train, y_train, config.seed)
    x_val, y_val = _as_xy(val_data)
    if x_val.shape[0] == 0:
        raise ValueError("empty validation set")

    stream = RngStream(config.seed, 131)
    adam = ndcore.AdamState(learning_rate=config.learning_rate)
    history = History()
    started = time.perf_counter()

    best_params = model.clone_params()
    best_acc = -np.inf
    best_val_loss = np.inf
    lr_wait = 0
    stop_wait = 0
    tol = config.improvement_tol
    n = x_train.shape[0]
    batch_uid = 0

    for epoch in range(config.max_epochs):
        order = stream.child(10_000 + epoch).permutation(n)
        epoch_loss = 0.0
        epoch_hits = 0
        for start in range(0, n, config.batch_size):
            take = order[start:start + config.batch_size]
            xb, yb = x_train[take], y_train[take]
            batch_uid += 1
            probs, cache = model.forward(xb, "train", stream.child(batch_uid))
            loss, grad = bce_loss(probs, yb)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}")
            grads = model.backward(cache, grad)
            model.set_params(ndcore.adam_step(adam, model.params(), grads))
            epoch_loss += loss * take.size
            epoch_hits += int(np.sum(models.predict_labels(probs) == yb))
        if config.grid_updates:
            model.update_grids(adam, shadow_params=(best_params,))

        val_probs = evaluate_probs(model, x_val)
        val_loss, _ = bce_loss(val_probs, y_val)
        val_acc = _accuracy(val_probs, y_val)
        history.epochs.append({
            "epoch": epoch, "lr": adam.learning_rate,
            "train_loss": epoch_loss / n, "train_accuracy": epoch_hits / n,
            "val_loss": val_loss, "val_accuracy": val_acc,
        })

        if val_acc > best_acc + tol:
            best_acc = val_acc
            best_params = model.clone_params()
            history.best_epoch = epoch

        if val_loss < best_val_loss - tol:
            best_val_loss = val_loss
            lr_wait = 0
            stop_wait = 0
        else:
            lr_wait += 1
            stop_wait += 1
            if stop_wait >= config.early_stop_patience:
                break
            if lr_wait >= config.lr_patience:
                model.set_params({k: v.copy() for k, v in best_params.items()})
                adam.learning_rate *= config.lr_factor
                lr_wait = 0

    model.set_params({k: v.copy() for k, v in best_params.items()})
    history.wall_clock_seconds = time.perf_counter() - started
    return model, history


def evaluate_model(model: models.Model, data) -> metrics_mod.MetricsReport:
    x, y = _as_xy(data)
    probs = evaluate_probs(model, x)
    return metrics_mod.full_report(y, models.predict_labels(probs),
                                   models.class_one_score(probs))


def _fold_worker(args):
    (kind, hp, matrix, train_idx, test_idx, seed, fold_no, config,
     smote, augment, variant, ansatz) = args
    tr = matrix.take(train_idx)
    te = matrix.take(test_idx)
    cont = ds._continuous_indices(tr)
    bounds = ds.iqr_bounds(tr.values, cont)
    tr = dc_replace(tr, values=ds.apply_bounds(tr.values, bounds))
    te = dc_replace(te, values=ds.apply_bounds(te.values, bounds))
    tr, scaler = ds.scale_minmax(tr)
    te = ds.apply_scaler(te, scaler)
    if smote:
        values, labels = ds.smote_balance(tr.values, tr.labels,
                                          rng=RngStream(seed, 5000 + fold_no))
        tr = ds.FeatureMatrix(values, labels, tr.column_names, tr.column_kinds, tr.scaler)
    if augment:
        tr, te = ds.augment_with_baseline(tr, te, seed)
    rng = RngStream(seed, 9000 + fold_no)
    if variant:
        model = models.build_ablation(variant, hp, rng, n_features=tr.n_cols)
    else:
        model = models.build(kind, hp, rng, n_features=tr.n_cols, ansatz=ansatz)
    fold_config = dc_replace(config, seed=seed * 1000 + fold_no)
    model, _ = fit(model, tr, None, fold_config)
    return evaluate_model(model, te)


def cross_validate(model_kind: str, hp, matrix: ds.FeatureMatrix, k: int = 10,
                   seed: int = 0, config: TrainConfig | None = None,
                   smote: bool = True, augment: bool = False,
                   threads: int = 1, variant: str | None = None,
                   ansatz: str | None = None):
    """Stratified k-fold evaluation with preprocessing fit inside each fold.
    Returns (list of per-fold MetricsReport, {metric: (mean, population std)})."""
    config = config or TrainConfig()
    folds = ds.stratified_folds(matrix.labels, k, seed)
    jobs = [(model_kind, hp, matrix, tr, te, seed, i, config, smote, augment,
             variant, ansatz) for i, (tr, te) in enumerate(folds)]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(_fold_worker, jobs))
    else:
        reports = []
        for i, job in enumerate(jobs):
            try:
                reports.append(_fold_worker(job))
            except Exception as exc:
                raise RuntimeError(f"fold {i} failed: {exc}") from exc
    return reports, aggregate_reports(reports)


def aggregate_reports(reports: Sequence[metrics_mod.MetricsReport]) -> dict:
    summary = {}
    for name in metrics_mod.METRIC_FIELDS:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        summary[name] = (float(vals.mean()), float(vals.std()))  # population std
    return summary


def square_loss(probs: np.ndarray, labels: np.ndarray):
    """Mean squared error between the class-1 probability and the label;
    the objective used by the tensor-network VQC baselines."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    p1 = probs[:, 1]
    residual = p1 - labels
    loss = float(np.mean(residual ** 2))
    grad = np.zeros_like(probs)
    grad[:, 1] = 2.0 * residual / labels.size
    return loss, grad


def fit_vqc(model: models.Model, train_data, val_data=None,
            config: TrainConfig | None = None, optimizer: str = "adam"):
    """Square-loss training loop for VQC models; optimizer is adam or
    nesterov (momentum 0.9; 0 momentum gives plain gradient descent)."""
    config = config or TrainConfig()
    x_train, y_train = _as_xy(train_data)
    if val_data is None and x_train.shape[0] >= 10:
        (x_train, y_train), val_data = _internal_val_split(x_train, y_train, config.seed)
    x_val, y_val = _as_xy(val_data) if val_data is not None else (x_train, y_train)

    stream = RngStream(config.seed, 173)
    if optimizer == "adam":
        opt_state = ndcore.AdamState(learning_rate=config.learning_rate)
    elif optimizer == "nesterov":
        opt_state = ndcore.NesterovState(learning_rate=config.learning_rate)
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")

    history = History()
    best_params = model.clone_params()
    best_acc = -np.inf
    n = x_train.shape[0]
    started = time.perf_counter()
    for epoch in range(config.max_epochs):
        order = stream.child(20_000 + epoch).permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            take = order[start:start + config.batch_size]
            xb, yb = x_train[take], y_train[take]
            if optimizer == "nesterov":
                ahead = opt_state.lookahead(model.params())
                live = model.clone_params()
                model.set_params(ahead)
                probs, cache = model.forward(xb, "train", stream.child(1))
                loss, grad = square_loss(probs, yb)
                grads = model.backward(cache, grad)
                model.set_params(live)
                model.set_params(ndcore.nesterov_step(opt_state, model.params(), grads))
            else:
                probs, cache = model.forward(xb, "train", stream.child(1))
                loss, grad = square_loss(probs, yb)
                grads = model.backward(cache, grad)
                model.set_params(ndcore.adam_step(opt_state, model.params(), grads))
            if not math.isfinite(loss):
                raise RuntimeError(f"non-finite VQC loss at epoch {epoch}")
            epoch_loss += loss * take.size
        val_probs = evaluate_probs(model, x_val)
        val_loss, _ = square_loss(val_probs, y_val)
        val_acc = _accuracy(val_probs, y_val)
        history.epochs.append({"epoch": epoch, "lr": config.learning_rate,
                               "train_loss": epoch_loss / n, "train_accuracy": float("nan"),
                               "val_loss": val_loss, "val_accuracy": val_acc})
        if val_acc > best_acc + config.improvement_tol:
            best_acc = val_acc
            best_params = model.clone_params()
            history.best_epoch = epoch
    model.set_params({k: v.copy() for k, v in best_params.items()})
    history.wall_clock_seconds = time.perf_counter() - started
    return model, history


DEFAULT_SEARCH_SPACE: Dict[str, list] = {
    "lstm_units": [32, 64, 96, 128],
    "dense_units": [128, 192, 256, 320, 384, 448, 512],
    "kan_units_1": [32, 64, 96, 128, 160, 192, 224, 256],
    "conv_filters": [32, 64, 96, 128],
    "qdense_units_1": [16, 48, 80, 112, 144, 176, 208, 240],
    "qdense_units_2": [16, 48, 80, 112, 144, 176, 208, 240],
    "qdense_units_out": [16, 48, 80, 112, 144, 176, 208, 240],
}


def _default_evaluator(model_kind, train_data, val_data, base_config):
    def evaluate(hp: models.Hyperparams, epochs: int, seed: int) -> float:
        x, _ = _as_xy(train_data)
        rng = RngStream(seed, 4242)
        model = models.build(model_kind, hp, rng, n_features=x.shape[1])
        cfg = dc_replace(base_config, max_epochs=epochs, seed=seed,
                         early_stop_patience=3)
        _, history = fit(model, train_data, val_data, cfg)
        accs = [row["val_accuracy"] for row in history.epochs]
        return max(accs) if accs else 0.0

    return evaluate


def sample_config(space: Dict[str, list], base: models.Hyperparams,
                  stream: RngStream) -> models.Hyperparams:
    choices = {}
    for i, (name, values) in enumerate(sorted(space.items())):
        pick = int(stream.child(i).integers(0, len(values), (1,))[0])
        choices[name] = values[pick]
    return dc_replace(base, **choices)


def tune(model_kind: str, space: Dict[str, list], budget: int,
         train_data=None, val_data=None, seed: int = 0,
         base_hp: models.Hyperparams | None = None,
         config: TrainConfig | None = None,
         rungs: Sequence[int] = (3, 10),
         evaluator: Optional[Callable] = None):
    """Successive halving over uniformly sampled configurations: evaluate
    everyone at rungs[0] epochs, keep the top third per rung, return the
    best survivor.  Deterministic under seed."""
    if budget < 1:
        raise ValueError("budget must allow at least one trial")
    if not space:
        raise ValueError("empty search space")
    base = (base_hp or models.Hyperparams()).validate()
    stream = RngStream(seed, 808)
    candidates = [sample_config(space, base, stream.child(i)) for i in range(budget)]
    if evaluator is None:
        evaluator = _default_evaluator(model_kind, train_data, val_data,
                                       config or TrainConfig())
    survivors = list(enumerate(candidates))
    scores = {}
    for rung, epochs in enumerate(rungs):
        scores = {idx: evaluator(hp, epochs, seed * 677 + idx)
                  for idx, hp in survivors}
        ranked = sorted(survivors, key=lambda item: (-scores[item[0]], item[0]))
        if rung < len(rungs) - 1:
            keep = max(1, math.ceil(len(ranked) / 3))
            survivors = ranked[:keep]
        else:
            survivors = ranked[:1]
    best_idx, best_hp = survivors[0]
    return best_hp, {"trials": budget, "best_index": best_idx,
                     "best_score": scores[best_idx]}
