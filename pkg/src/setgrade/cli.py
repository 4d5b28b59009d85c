"""Command-line pipeline: train, score, sweep, synth.

Configuration comes from defaults, then a flat key=value config file,
then explicit flags (flags win). Every train run writes a resolved
config echo sufficient to reproduce it exactly. Failures exit nonzero
with a single machine-parseable stderr line:

    error:{category}: {message}

with category one of {io, parse, config, shape, train, score}.
"""

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import data, encoder, metrics, scorer, trainer
from .errors import (ConfigError, EvalError, ParseError, SamplingError,
                     ScoreError, SetGradeError, ShapeError, TrainError,
                     UsageError)

_CATEGORY = (
    (ParseError, "parse"),
    (ShapeError, "shape"),
    (TrainError, "train"),
    (SamplingError, "train"),
    (ScoreError, "score"),
    (EvalError, "score"),
    (UsageError, "config"),
    (ConfigError, "config"),
    (OSError, "io"),
)

_HP_TYPES = {
    "set_size": int, "latent_dim": int, "heads": int, "depth": int,
    "pooling": str, "epochs": int, "batches_per_epoch": int,
    "batch_size": int, "learning_rate": float, "weight_decay": float,
    "rmsprop_smoothing": float, "rmsprop_epsilon": float, "loss": str,
    "max_grade": int, "n_contexts": int, "n_refs": int, "seed": int,
}

_SPLIT_TYPES = {
    "test_fraction": float, "labeled_anomaly_count": int,
    "labeled_ratio": float, "contamination_cap": float, "stats_scope": str,
    "label_column": str,
}

_PATH_TYPES = {"data": str, "out": str}

_TRAIN_TYPES = {**_HP_TYPES, **_SPLIT_TYPES, **_PATH_TYPES}
_SWEEP_TYPES = {**_TRAIN_TYPES, "axis": str, "values": str}
_SCORE_TYPES = {"set_size": int, "n_contexts": int, "n_refs": int,
                "seed": int, "model": str, "pool": str, "data": str,
                "stats": str, "out": str}

SWEEP_AXES = ("set_size", "contamination", "labeled_ratio")
SWEEP_HEADER = ("axis", "value", "auc_roc", "auc_pr", "wall_ms", "status")


def _categorize(exc):
    for klass, category in _CATEGORY:
        if isinstance(exc, klass):
            return category
    return "config"


def _fail(exc):
    message = " ".join(str(exc).split())   # keep the line single-line
    print(f"error:{_categorize(exc)}: {message}", file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def read_config_file(path):
    """Flat key=value lines; blank lines and # comments ignored."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    entries = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(f"{path}:{lineno}: expected key=value, "
                             f"got {stripped!r}")
        key, _, value = stripped.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def _convert(key, raw, target):
    try:
        if target is int:
            return int(raw)
        if target is float:
            return float(raw)
        return raw
    except ValueError:
        raise ParseError(f"config key {key}: cannot parse {raw!r} as "
                         f"{target.__name__}") from None


def resolve_config(args, types, defaults):
    """defaults <- config file <- explicit flags, flags winning."""
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, raw in read_config_file(config_path).items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _convert(key, raw, types[key])
    for key in types:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    # a flag choosing one labeled-budget form overrides the file's other form
    if getattr(args, "labeled_ratio", None) is not None and \
            getattr(args, "labeled_anomaly_count", None) is None:
        cfg["labeled_anomaly_count"] = None
    if getattr(args, "labeled_anomaly_count", None) is not None and \
            getattr(args, "labeled_ratio", None) is None:
        cfg["labeled_ratio"] = None
    return cfg


def write_resolved_config(cfg, path):
    """Lossless key=value echo; None entries omitted."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            value = cfg[key]
            if value is None:
                continue
            if isinstance(value, float):
                value = repr(value)
            fh.write(f"{key}={value}\n")


def _hyperparams(cfg):
    return trainer.Hyperparams(
        **{name: cfg[name] for name in _HP_TYPES}).validate()


def _split_spec(cfg):
    return data.SplitSpec(
        test_fraction=cfg["test_fraction"],
        labeled_anomaly_count=cfg["labeled_anomaly_count"],
        labeled_ratio=cfg["labeled_ratio"],
        contamination_cap=cfg["contamination_cap"],
        stats_scope=cfg["stats_scope"],
        seed=cfg["seed"]).validate()


def _train_defaults():
    defaults = {name: getattr(trainer.Hyperparams(), name)
                for name in _HP_TYPES}
    spec = data.SplitSpec()
    defaults.update({
        "test_fraction": spec.test_fraction,
        "labeled_anomaly_count": spec.labeled_anomaly_count,
        "labeled_ratio": spec.labeled_ratio,
        "contamination_cap": spec.contamination_cap,
        "stats_scope": spec.stats_scope,
        "label_column": None, "data": None, "out": None,
    })
    return defaults


def _require(cfg, key, command):
    if cfg.get(key) in (None, ""):
        raise ConfigError(f"{command} requires {key} (flag --{key.replace('_', '-')})")
    return cfg[key]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_train(args):
    cfg = resolve_config(args, _TRAIN_TYPES, _train_defaults())
    data_path = _require(cfg, "data", "train")
    out_dir = _require(cfg, "out", "train")

    dataset = data.load_csv(data_path, label_column=cfg["label_column"])
    prepared = data.split(dataset, _split_spec(cfg))
    hp = _hyperparams(cfg)
    result = trainer.train(prepared.unlabeled, prepared.anomalies, hp)

    os.makedirs(out_dir, exist_ok=True)
    encoder.save_model(result.params, os.path.join(out_dir, "model.bin"))
    trainer.write_train_log(result, os.path.join(out_dir, "train_log.jsonl"))
    data.save_prepared(prepared, os.path.join(out_dir, "prepared"))
    write_resolved_config(cfg, os.path.join(out_dir, "config.resolved"))

    last = result.history[-1]["mean_loss"] if result.history else float("nan")
    print(f"trained {os.path.join(out_dir, 'model.bin')} "
          f"best_epoch={result.best_epoch} final_loss={last:.6f} "
          f"pool={prepared.unlabeled.shape[0]} "
          f"anomalies={prepared.anomalies.shape[0]}")
    return 0


def _load_score_inputs(cfg, unlabeled_flag):
    params = encoder.load_model(_require(cfg, "model", "score"))
    pool_ds = data.load_csv(_require(cfg, "pool", "score"))
    pool = pool_ds.features                     # pool labels are ignored
    data_path = _require(cfg, "data", "score")
    if unlabeled_flag:
        test, labels = data.load_features_csv(data_path), None
    else:
        test_ds = data.load_csv(data_path)
        test, labels = test_ds.features, test_ds.labels
    if cfg.get("stats"):
        # the pool is already in model space (train writes it normalized);
        # stats map raw test rows into that same space
        test = data.zscore_apply(test, data.load_stats(cfg["stats"]))
    return params, pool, test, labels


def cmd_score(args):
    defaults = {"set_size": trainer.Hyperparams().set_size,
                "n_contexts": trainer.Hyperparams().n_contexts,
                "n_refs": trainer.Hyperparams().n_refs, "seed": 0,
                "model": None, "pool": None, "data": None, "stats": None,
                "out": None}
    cfg = resolve_config(args, _SCORE_TYPES, defaults)
    out_path = _require(cfg, "out", "score")
    params, pool, test, labels = _load_score_inputs(cfg, args.unlabeled)

    rng = np.random.default_rng([cfg["seed"], 2])
    report = scorer.score_dataset(
        encoder.batch_scorer(params), test, pool,
        set_size=cfg["set_size"], n_contexts=cfg["n_contexts"],
        n_refs=cfg["n_refs"], rng=rng, exhaustive=args.exhaustive,
        meta={"model_hash": encoder.model_hash(params),
              "score_seed": cfg["seed"]})
    if labels is not None:
        result = metrics.evaluate(scorer.scores_array(report), labels)
        report.metrics = {"auc_roc": result.auc_roc, "auc_pr": result.auc_pr,
                          "n_pos": result.n_pos, "n_neg": result.n_neg}
    scorer.write_score_report(report, out_path, labels)

    suffix = ""
    if report.metrics:
        suffix = (f" auc_roc={report.metrics['auc_roc']:.4f}"
                  f" auc_pr={report.metrics['auc_pr']:.4f}")
    print(f"scored {len(report.records)} points -> {out_path}{suffix}")
    return 0


def _sweep_values(axis, raw):
    kind = int if axis == "set_size" else float
    try:
        values = [kind(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ParseError(f"cannot parse sweep values {raw!r}") from None
    if not values:
        raise ConfigError("sweep needs at least one value")
    return sorted(values)


def _apply_axis(cfg, axis, value):
    cfg = dict(cfg)
    if axis == "set_size":
        cfg["set_size"] = value
    elif axis == "contamination":
        if not 0 <= value < 1:
            raise ConfigError(f"contamination rate must be in [0, 1), "
                              f"got {value}")
        cfg["contamination_cap"] = value
    else:
        cfg["labeled_ratio"] = value
        cfg["labeled_anomaly_count"] = None
    return cfg


def _check_contamination_target(dataset, prepared, rate):
    """The sweep wants the pool to sit exactly at the requested rate."""
    test_anomalies = int(prepared.test_labels.sum())
    train_anomalies = dataset.n_anomalies - test_anomalies
    m = prepared.anomalies.shape[0]
    retained = train_anomalies - m - prepared.discarded_anomalies
    n_normal = prepared.unlabeled.shape[0] - retained
    target = int(rate * n_normal / (1.0 - rate)) if rate < 1 else retained
    if retained < target:
        raise SamplingError(
            f"cannot reach contamination rate {rate}: the pool needs "
            f"{target} anomalies but only {retained} are available")


def _sweep_one(dataset, cfg, axis, value, seed):
    cfg = _apply_axis(cfg, axis, value)
    cfg["seed"] = seed
    prepared = data.split(dataset, _split_spec(cfg))
    if axis == "contamination":
        _check_contamination_target(dataset, prepared, value)
    hp = _hyperparams(cfg)
    result = trainer.train(prepared.unlabeled, prepared.anomalies, hp)
    rng = np.random.default_rng([seed, 2])
    report = scorer.score_dataset(
        encoder.batch_scorer(result.params), prepared.test_features,
        prepared.unlabeled, set_size=hp.set_size,
        n_contexts=hp.n_contexts, n_refs=hp.n_refs, rng=rng)
    evaluated = metrics.evaluate(scorer.scores_array(report),
                                 prepared.test_labels)
    return evaluated.auc_roc, evaluated.auc_pr


def cmd_sweep(args):
    defaults = _train_defaults()
    defaults.update({"axis": None, "values": None})
    cfg = resolve_config(args, _SWEEP_TYPES, defaults)
    data_path = _require(cfg, "data", "sweep")
    out_path = _require(cfg, "out", "sweep")
    axis = _require(cfg, "axis", "sweep")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, "
                          f"got {axis!r}")
    values = _sweep_values(axis, _require(cfg, "values", "sweep"))

    dataset = data.load_csv(data_path, label_column=cfg["label_column"])
    base_seed = cfg["seed"]
    rows, failures = [], 0
    for index, value in enumerate(values):
        started = time.perf_counter()
        try:
            auc_roc, auc_pr = _sweep_one(dataset, cfg, axis, value,
                                         base_seed + index)
            status, roc_text, pr_text = "ok", repr(auc_roc), repr(auc_pr)
        except SetGradeError as exc:
            failures += 1
            status, roc_text, pr_text = "failed", "", ""
            print(f"sweep {axis}={value}: "
                  f"error:{_categorize(exc)}: {exc}", file=sys.stderr)
        wall_ms = (time.perf_counter() - started) * 1000.0
        value_text = str(value) if axis == "set_size" else repr(float(value))
        rows.append((axis, value_text, roc_text, pr_text,
                     f"{wall_ms:.3f}", status))

    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        writer.writerows(rows)
    print(f"sweep {axis} over {len(values)} values -> {out_path} "
          f"({failures} failed)")
    return 1 if failures else 0


def cmd_synth(args):
    dataset = data.synth_blobs(args.n_normal, args.n_anomaly, args.dim,
                               args.separation, seed=args.seed)
    data.write_csv(dataset, args.out)
    print(f"wrote {dataset.features.shape[0]} rows "
          f"({dataset.n_anomalies} anomalies, dim {args.dim}) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_hyperparam_flags(p):
    p.add_argument("--set-size", type=int, help="points per training set")
    p.add_argument("--latent-dim", type=int, help="embedding width")
    p.add_argument("--heads", type=int, help="attention heads")
    p.add_argument("--depth", type=int, help="attention blocks")
    p.add_argument("--pooling", help="sum or max")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batches-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--rmsprop-smoothing", type=float)
    p.add_argument("--rmsprop-epsilon", type=float)
    p.add_argument("--loss", help="mae or mse")
    p.add_argument("--max-grade", type=int)
    p.add_argument("--n-contexts", type=int, help="scoring contexts")
    p.add_argument("--n-refs", type=int, help="references per context")
    p.add_argument("--seed", type=int)


def _add_split_flags(p):
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--labeled-anomaly-count", type=int,
                   help="absolute labeled-anomaly budget m")
    p.add_argument("--labeled-ratio", type=float,
                   help="labeled budget as a fraction of training anomalies")
    p.add_argument("--contamination-cap", type=float)
    p.add_argument("--stats-scope", help="train or all")
    p.add_argument("--label-column", help="label column name (default: last)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="setgrade",
        description="Semi-supervised anomaly detection with graded set "
                    "supervision and context-calibrated scoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="prepare data and train a model")
    p_train.add_argument("--data", help="labeled CSV dataset")
    p_train.add_argument("--out", help="output directory")
    p_train.add_argument("--config", help="key=value config file")
    _add_hyperparam_flags(p_train)
    _add_split_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_score = sub.add_parser("score", help="score test points with a model")
    p_score.add_argument("--model", help="model file from train")
    p_score.add_argument("--pool", help="unlabeled pool CSV")
    p_score.add_argument("--data", help="test CSV")
    p_score.add_argument("--stats", help="stats.json mapping raw test rows "
                                         "into model space")
    p_score.add_argument("--out", help="report path (.jsonl)")
    p_score.add_argument("--config", help="key=value config file")
    p_score.add_argument("--unlabeled", action="store_true",
                         help="test CSV has no label column")
    p_score.add_argument("--exhaustive", action="store_true",
                         help="enumerate every pool row as a reference")
    p_score.add_argument("--set-size", type=int)
    p_score.add_argument("--n-contexts", type=int)
    p_score.add_argument("--n-refs", type=int)
    p_score.add_argument("--seed", type=int)
    p_score.set_defaults(func=cmd_score)

    p_sweep = sub.add_parser("sweep", help="train+score along one axis")
    p_sweep.add_argument("--data", help="labeled CSV dataset")
    p_sweep.add_argument("--out", help="output CSV path")
    p_sweep.add_argument("--axis", help=f"one of {', '.join(SWEEP_AXES)}")
    p_sweep.add_argument("--values", help="comma-separated axis values")
    p_sweep.add_argument("--config", help="key=value config file")
    _add_hyperparam_flags(p_sweep)
    _add_split_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_synth = sub.add_parser("synth", help="generate synthetic blob data")
    p_synth.add_argument("--n-normal", type=int, default=2000)
    p_synth.add_argument("--n-anomaly", type=int, default=40)
    p_synth.add_argument("--dim", type=int, default=10)
    p_synth.add_argument("--separation", type=float, default=4.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SetGradeError, OSError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
