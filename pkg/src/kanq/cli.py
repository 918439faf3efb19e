"""Batch command-line interface.

Subcommands: make-data, preprocess, train, evaluate, crossval, ablate,
benchmark-vqc, conformal, explain, ttest.  Every command reads file-based
inputs, writes into --out only (atomic temp-and-rename), and records a
manifest with the resolved configuration, root seed, and input digests so
a run can be reproduced exactly.  Exit codes: 0 success, 1 usage error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import asdict, replace as dc_replace
from pathlib import Path

import numpy as np

from . import conformal as conf
from . import dataset as ds
from . import explain as expl
from . import metrics as met
from . import models, synth
from . import train as trn
from .rng import RngStream


class UsageError(ValueError):
    pass


def _atomic_write(path: Path, writer) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, payload) -> None:
    def do(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    _atomic_write(path, do)


def write_csv_rows(path: Path, header, rows) -> None:
    def do(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)

    _atomic_write(path, do)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[default]\n" + fh.read())
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[key] = value
    return flat


_BOOL = {"1": True, "true": True, "yes": True, "on": True,
         "0": False, "false": False, "no": False, "off": False}


def _coerce(value: str):
    lowered = value.strip().lower()
    if lowered in _BOOL:
        return _BOOL[lowered]
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value.strip()


def _resolve(args) -> dict:
    """Merge config-file values with command-line overrides."""
    config = {}
    if args.config:
        config.update({k: _coerce(v) for k, v in _load_config_file(args.config).items()})
    for key in ("data", "seed", "model", "qubits", "layers", "out", "threads",
                "epochs", "smote", "augment", "encoding", "folds", "ansatz",
                "batch_size", "checkpoint", "instance", "trials"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, "alpha", None):
        config["alpha"] = [float(a) for a in args.alpha]
    config.setdefault("seed", 0)
    config.setdefault("threads", 1)
    config.setdefault("alpha", [0.05, 0.1, 0.2])
    config.setdefault("smote", True)
    config.setdefault("augment", True)
    config.setdefault("encoding", "ordinal")
    return config


def _pipeline(config) -> tuple:
    data = config.get("data")
    if not data:
        raise UsageError("--data is required")
    records = ds.load_records(data)
    pipeline_config = ds.PipelineConfig(
        encoding=config.get("encoding", "ordinal"),
        smote=bool(config.get("smote", True)),
        interactions=bool(config.get("interactions", False)),
        augment=bool(config.get("augment", True)),
        seed=int(config.get("seed", 0)),
    )
    return ds.run_pipeline(records, pipeline_config)


def _hyperparams(config) -> models.Hyperparams:
    hp = models.Hyperparams()
    overrides = {}
    if "qubits" in config:
        overrides["n_qubits"] = int(config["qubits"])
    if "layers" in config:
        overrides["quantum_layers"] = int(config["layers"])
    for name in ("lstm_units", "dense_units", "kan_units_1", "kan_units_2",
                 "qdense_units_1", "qdense_units_2", "qdense_units_out",
                 "conv_filters", "dropout_rate", "grid_size", "join_units"):
        if name in config:
            overrides[name] = type(getattr(hp, name))(config[name])
    return dc_replace(hp, **overrides).validate()


def _train_config(config) -> trn.TrainConfig:
    kwargs = {"seed": int(config.get("seed", 0))}
    if "epochs" in config:
        kwargs["max_epochs"] = int(config["epochs"])
    if "batch_size" in config:
        kwargs["batch_size"] = int(config["batch_size"])
    for name in ("learning_rate", "lr_factor", "lr_patience", "early_stop_patience"):
        if name in config:
            kwargs[name] = type(getattr(trn.TrainConfig(), name))(config[name])
    return trn.TrainConfig(**kwargs)


def _manifest(out: Path, command: str, config: dict) -> None:
    manifest = {"command": command, "config": {}, "inputs": {}}
    for key, value in sorted(config.items()):
        manifest["config"][key] = value
    for key in ("data", "checkpoint", "config_file"):
        path = config.get(key)
        if path and os.path.exists(str(path)):
            manifest["inputs"][key] = {"path": str(path), "sha256": _digest(path)}
    write_json(out / "manifest.json", manifest)


def _metrics_row(report: met.MetricsReport):
    return [report.maP, report.maR, report.maF1, report.accuracy,
            report.roc_auc, report.mcc, report.kappa]


_METRIC_HEADER = ["maP", "maR", "maF1", "accuracy", "roc_auc", "mcc", "kappa"]


# --- subcommand implementations --------------------------------------------

def cmd_make_data(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "heart.csv"
    _atomic_write(path, lambda tmp: synth.write_csv(tmp, seed=int(config["seed"])))
    print(f"wrote {path}")
    return 0


def cmd_preprocess(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "preprocessed")
    train_fm, test_fm, info = _pipeline(config)
    for name, fm in (("train", train_fm), ("test", test_fm)):
        header = fm.column_names + ["HeartDisease"]
        rows = [list(map(repr, row)) + [int(label)]
                for row, label in zip(fm.values, fm.labels)]
        write_csv_rows(out / f"{name}.csv", header, rows)
    write_json(out / "preprocess.json", info)
    _manifest(out, "preprocess", config)
    print(f"preprocessed {info['n_train']}/{info['n_test']} rows, "
          f"{info['n_features']} features -> {out}")
    return 0


def _build_model(config, hp, n_features, rng):
    kind = config.get("model", "kacq_dcnn")
    variant = config.get("variant")
    if variant:
        return models.build_ablation(variant, hp, rng, n_features)
    return models.build(kind, hp, rng, n_features, ansatz=config.get("ansatz"))


def cmd_train(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "run")
    train_fm, test_fm, info = _pipeline(config)
    hp = _hyperparams(config)
    seed = int(config["seed"])
    model = _build_model(config, hp, train_fm.n_cols, RngStream(seed, 1))
    model, history = trn.fit(model, train_fm, None, _train_config(config))
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "checkpoint.bin",
                  lambda tmp: model.save(tmp, {"seed": seed, "pipeline": info}))
    _atomic_write(out / "history.csv", lambda tmp: history.to_csv(tmp))
    write_json(out / "history.json", history.summary())
    report = trn.evaluate_model(model, test_fm)
    write_json(out / "metrics.json", report.as_dict())
    _manifest(out, "train", config)
    print(f"trained {model.kind} ({model.param_count()} parameters): "
          f"test accuracy {report.accuracy:.4f}, roc_auc {report.roc_auc:.4f}")
    return 0


def _load_checkpoint(config) -> models.Model:
    path = config.get("checkpoint")
    if not path:
        raise UsageError("--checkpoint is required")
    return models.Model.load(path)


def cmd_evaluate(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "eval")
    model = _load_checkpoint(config)
    config["seed"] = model.meta.get("seed", config.get("seed", 0))
    _, test_fm, _ = _pipeline(config)
    probs = trn.evaluate_probs(model, test_fm.values)
    scores = models.class_one_score(probs)
    report = met.full_report(test_fm.labels, models.predict_labels(probs), scores)
    write_json(out / "metrics.json", report.as_dict())
    write_csv_rows(out / "roc_curve.csv", ["threshold", "fpr", "tpr"],
                   [[repr(t), repr(f), repr(r)] for t, f, r in
                    met.roc_curve(scores, test_fm.labels)])
    write_csv_rows(out / "calibration.csv",
                   ["mean_predicted", "fraction_positive", "count"],
                   [[repr(a), repr(b), c] for a, b, c in
                    met.calibration_curve(scores, test_fm.labels)])
    _manifest(out, "evaluate", config)
    print(f"accuracy {report.accuracy:.4f} roc_auc {report.roc_auc:.4f} "
          f"mcc {report.mcc:.4f} kappa {report.kappa:.4f}")
    return 0


def _encoded_matrix(config) -> ds.FeatureMatrix:
    records = ds.load_records(config["data"])
    records = ds.impute_missing(ds.deduplicate(records))
    return ds.encode_features(records, config.get("encoding", "ordinal"))


def cmd_crossval(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "crossval")
    matrix = _encoded_matrix(config)
    hp = _hyperparams(config)
    k = int(config.get("folds", 10))
    reports, summary = trn.cross_validate(
        config.get("model", "kacq_dcnn"), hp, matrix, k=k,
        seed=int(config["seed"]), config=_train_config(config),
        smote=bool(config.get("smote", True)),
        augment=bool(config.get("augment", True)),
        threads=int(config.get("threads", 1)),
        ansatz=config.get("ansatz"))
    rows = [[i] + _metrics_row(r) for i, r in enumerate(reports)]
    write_csv_rows(out / "folds.csv", ["fold"] + _METRIC_HEADER, rows)
    write_json(out / "summary.json",
               {name: {"mean": m, "std": s} for name, (m, s) in summary.items()})
    _manifest(out, "crossval", config)
    acc_mean, acc_std = summary["accuracy"]
    print(f"{k}-fold accuracy {acc_mean:.4f} +/- {acc_std:.4f}")
    return 0


def cmd_ablate(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "ablation")
    train_fm, test_fm, _ = _pipeline(config)
    hp = _hyperparams(config)
    seed = int(config["seed"])
    rows = []
    for variant in models.ABLATION_VARIANTS:
        model = models.build_ablation(variant, hp, RngStream(seed, 21), train_fm.n_cols)
        model, _ = trn.fit(model, train_fm, None, _train_config(config))
        report = trn.evaluate_model(model, test_fm)
        rows.append([variant] + _metrics_row(report))
        print(f"{variant}: accuracy {report.accuracy:.4f}")
    write_csv_rows(out / "ablation.csv", ["variant"] + _METRIC_HEADER, rows)
    _manifest(out, "ablate", config)
    return 0


def cmd_benchmark_vqc(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "vqc")
    train_fm, test_fm, _ = _pipeline(config)
    hp = _hyperparams(config)
    seed = int(config["seed"])
    rows = []
    max_layers = int(config.get("layers", 4))
    for ansatz in ("mera", "mps", "ttn"):
        for layers in range(1, max_layers + 1):
            hp_l = dc_replace(hp, quantum_layers=layers)
            model = models.build("vqc", hp_l, RngStream(seed, 31),
                                 n_features=train_fm.n_cols, ansatz=ansatz)
            model, _ = trn.fit_vqc(model, train_fm, config=_train_config(config))
            report = trn.evaluate_model(model, test_fm)
            rows.append([ansatz, layers] + _metrics_row(report))
            print(f"{ansatz} L={layers}: accuracy {report.accuracy:.4f}")
    write_csv_rows(out / "vqc_benchmark.csv", ["ansatz", "layers"] + _METRIC_HEADER, rows)
    _manifest(out, "benchmark-vqc", config)
    return 0


def cmd_conformal(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "conformal")
    train_fm, test_fm, _ = _pipeline(config)
    hp = _hyperparams(config)
    seed = int(config["seed"])
    fit_fm, cal_fm = ds.stratified_split(train_fm, ds.SplitSpec(0.75, seed))
    model = _build_model(config, hp, fit_fm.n_cols, RngStream(seed, 41))
    model, _ = trn.fit(model, fit_fm, None, _train_config(config))
    cal_probs = trn.evaluate_probs(model, cal_fm.values)
    test_probs = trn.evaluate_probs(model, test_fm.values)
    alphas = config["alpha"]
    table = conf.conformal_table(cal_probs, cal_fm.labels, test_probs,
                                 test_fm.labels, alphas)
    write_csv_rows(out / "conformal.csv",
                   ["mode", "alpha", "error_rate", "avg_set_size",
                    "singleton_fraction", "empty_count", "n"],
                   [[row["mode"], row["alpha"], repr(row["error_rate"]),
                     repr(row["avg_set_size"]), repr(row["singleton_fraction"]),
                     row["empty_count"], row["n"]] for row in table])
    cal = conf.calibrate(cal_probs, cal_fm.labels, "standard")
    hist = conf.score_histogram(cal, tuple(alphas))
    write_csv_rows(out / "score_histogram.csv", ["bin_left", "bin_right", "count"],
                   [[repr(l), repr(r), c] for l, r, c in
                    zip(hist["bin_edges"][:-1], hist["bin_edges"][1:], hist["counts"])])
    write_json(out / "quantiles.json",
               {str(a): q for a, q in hist["quantiles"].items()})
    _manifest(out, "conformal", config)
    for row in table:
        print(f"{row['mode']} alpha={row['alpha']}: error {row['error_rate']:.3f} "
              f"size {row['avg_set_size']:.2f}")
    return 0


def cmd_explain(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "explain")
    model = _load_checkpoint(config)
    config["seed"] = model.meta.get("seed", config.get("seed", 0))
    train_fm, test_fm, _ = _pipeline(config)
    seed = int(config["seed"])
    instance = int(config.get("instance", 0))
    if not 0 <= instance < test_fm.n_rows:
        raise UsageError(f"--instance must be in [0, {test_fm.n_rows})")
    x = test_fm.values[instance]

    def predict(batch):
        probs = trn.evaluate_probs(model, batch)
        return models.class_one_score(probs)

    attribution = expl.shapley_exact(predict, x, train_fm.values)
    write_csv_rows(out / "shapley.csv", ["feature", "value"],
                   [[name, repr(v)] for name, v in
                    zip(test_fm.column_names, attribution.values)])
    write_json(out / "shapley.json", {
        "base_value": attribution.base_value, "fx": attribution.fx,
        "values": dict(zip(test_fm.column_names, attribution.values.tolist())),
        "instance": instance})
    surrogate = expl.lime_explain(predict, x, train_fm.values,
                                  test_fm.column_kinds, seed=seed)
    write_csv_rows(out / "lime.csv", ["feature", "weight"],
                   [[name, repr(w)] for name, w in
                    zip(test_fm.column_names, surrogate.weights)])
    write_json(out / "lime.json", {
        "intercept": surrogate.intercept, "kernel_width": surrogate.kernel_width,
        "r2": surrogate.r2, "instance": instance,
        "weights": dict(zip(test_fm.column_names, surrogate.weights.tolist()))})
    _manifest(out, "explain", config)
    top = test_fm.column_names[int(np.argmax(np.abs(attribution.values)))]
    print(f"instance {instance}: f(x)={attribution.fx:.3f} "
          f"base={attribution.base_value:.3f} top feature {top}")
    return 0


def cmd_ttest(args) -> int:
    config = _resolve(args)
    out = Path(config.get("out") or "ttest")
    matrix = _encoded_matrix(config)
    hp = _hyperparams(config)
    k = int(config.get("folds", 10))
    seed = int(config["seed"])
    reference = config.get("model", "kacq_dcnn")
    rivals = [m.strip() for m in str(config.get("against", "logistic")).split(",") if m.strip()]
    tc = _train_config(config)
    shared = dict(k=k, seed=seed, config=tc, smote=bool(config.get("smote", True)),
                  augment=bool(config.get("augment", True)),
                  threads=int(config.get("threads", 1)))
    ref_reports, _ = trn.cross_validate(reference, hp, matrix, **shared)
    ref_acc = [r.accuracy for r in ref_reports]
    rows = []
    adjusted = met.bonferroni(0.05, len(rivals))
    for rival in rivals:
        rival_reports, _ = trn.cross_validate(rival, hp, matrix, **shared)
        acc = [r.accuracy for r in rival_reports]
        t, p, d, df = met.paired_t_test(ref_acc, acc)
        rows.append([rival, df, repr(d), repr(t), repr(p), repr(adjusted),
                     "yes" if p < adjusted else "no"])
        print(f"{reference} vs {rival}: t={t:.3f} p={p:.2e} df={df} d={d:.3f}")
    write_csv_rows(out / "ttests.csv",
                   ["model", "df", "cohens_d", "t_statistic", "p_value",
                    "alpha_adjusted", "significant"], rows)
    _manifest(out, "ttest", config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kanq", description="dual-channel KAN/quantum classifier pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--data", help="input CSV path")
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="root seed (default 0)")
        p.add_argument("--model", help="model kind (default kacq_dcnn)")
        p.add_argument("--qubits", type=int, help="quantum register size")
        p.add_argument("--layers", type=int, help="quantum layer count")
        p.add_argument("--alpha", nargs="*", help="conformal miscoverage levels")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="parallel workers")
        p.add_argument("--epochs", type=int, help="training epoch cap")
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--smote", type=lambda v: _BOOL[v.lower()], help="on/off")
        p.add_argument("--augment", type=lambda v: _BOOL[v.lower()], help="on/off")
        p.add_argument("--encoding", choices=["ordinal", "one_hot"])
        p.add_argument("--folds", type=int, help="cross-validation folds")
        return p

    common(sub.add_parser("make-data", help="write the synthetic dataset"))
    common(sub.add_parser("preprocess", help="CSV to matrices plus manifest"))
    common(sub.add_parser("train", help="fit a model, save checkpoint"))
    p = common(sub.add_parser("evaluate", help="checkpoint to metrics/curves"))
    p.add_argument("--checkpoint", help="checkpoint file")
    common(sub.add_parser("crossval", help="stratified k-fold table"))
    common(sub.add_parser("ablate", help="run every ablation variant"))
    p = common(sub.add_parser("benchmark-vqc", help="tensor-network VQC table"))
    p.add_argument("--ansatz", help="restrict to one ansatz")
    common(sub.add_parser("conformal", help="per-alpha prediction-set report"))
    p = common(sub.add_parser("explain", help="Shapley and LIME dumps"))
    p.add_argument("--checkpoint", help="checkpoint file")
    p.add_argument("--instance", type=int, help="test row to explain")
    p = common(sub.add_parser("ttest", help="paired t-tests with Bonferroni"))
    p.add_argument("--against", help="comma-separated rival model kinds")
    return parser


_COMMANDS = {
    "make-data": cmd_make_data,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "crossval": cmd_crossval,
    "ablate": cmd_ablate,
    "benchmark-vqc": cmd_benchmark_vqc,
    "conformal": cmd_conformal,
    "explain": cmd_explain,
    "ttest": cmd_ttest,
}


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except (UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
