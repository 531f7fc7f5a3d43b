"""Command-line front end: extract, train, cv, predict, compare.

Run configuration can come from a JSON file (``--config``); command-line
flags override file values, which override defaults. All file outputs are
written atomically (temp file + rename), so a failed run never leaves a
partial artifact.

Exit codes: 0 success, 1 validation or data-format error, 2 missing or
unreadable input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import figures, report
from .errors import SentiboostError
from .gbm import (
    GBMConfig,
    fit,
    load_model,
    predict_class,
    predict_proba,
    save_model,
)
from .ingest import (
    FeatureCache,
    PreprocessConfig,
    dataset_stats,
    load_manifest,
    preprocess_image,
    read_feature_cache,
    write_feature_cache,
)
from .metrics import cross_validate
from .resnet50 import build_model, load_weights_file
from .report import class_names

EXTRACT_BATCH = 8


@dataclass
class RunConfig:
    weights_path: str | None = None
    manifest_path: str | None = None
    cache_path: str | None = None
    model_path: str | None = None
    report_path: str | None = None
    out_path: str | None = None
    dataset: str | None = None
    k_folds: int = 10
    seed: int = 0
    figures: bool = True
    gbm: GBMConfig = field(default_factory=GBMConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)


_GBM_FLAGS = (
    "learning_rate", "lambda_l2", "alpha_l1", "gamma_min_gain",
    "max_depth", "n_rounds", "min_child_weight",
)


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must contain a JSON object")
    return data


def resolve_config(args) -> RunConfig:
    """Merge defaults, config-file values, and flags (flags win)."""
    file_values = _load_config_file(args.config) if getattr(args, "config", None) else {}

    def pick(flag_name, file_key, default):
        flag = getattr(args, flag_name, None)
        if flag is not None:
            return flag
        return file_values.get(file_key, default)

    gbm_file = file_values.get("gbm", {})
    gbm_kwargs = {}
    for name in _GBM_FLAGS:
        value = getattr(args, name, None)
        if value is None:
            value = gbm_file.get(name)
        if value is not None:
            gbm_kwargs[name] = value
    gbm_kwargs["seed"] = int(pick("seed", "seed", 0))

    pre_file = file_values.get("preprocess", {})
    pre_kwargs = {}
    if "channel_mean" in pre_file:
        pre_kwargs["channel_mean"] = tuple(pre_file["channel_mean"])
    if "channel_std" in pre_file:
        pre_kwargs["channel_std"] = tuple(pre_file["channel_std"])

    return RunConfig(
        weights_path=pick("weights", "weights_path", None),
        manifest_path=pick("manifest", "manifest_path", None),
        cache_path=pick("cache", "cache_path", None),
        model_path=pick("model", "model_path", None),
        report_path=pick("report", "report_path", None),
        out_path=pick("out", "out_path", None),
        dataset=pick("dataset", "dataset", None),
        k_folds=int(pick("k_folds", "k_folds", 10)),
        seed=int(pick("seed", "seed", 0)),
        figures=not getattr(args, "no_figures", False),
        gbm=GBMConfig(**gbm_kwargs),
        preprocess=PreprocessConfig(**pre_kwargs),
    )


def _require(value, name: str) -> str:
    if not value:
        raise ValueError(f"{name} is required (flag or config file)")
    return value


def _config_echo(config: RunConfig) -> dict:
    gbm = config.gbm
    return {
        "seed": config.seed,
        "k_folds": config.k_folds,
        "gbm": {
            "learning_rate": gbm.learning_rate,
            "lambda_l2": gbm.lambda_l2,
            "alpha_l1": gbm.alpha_l1,
            "gamma_min_gain": gbm.gamma_min_gain,
            "max_depth": gbm.max_depth,
            "n_rounds": gbm.n_rounds,
            "min_child_weight": gbm.min_child_weight,
            "num_classes": gbm.num_classes,
            "seed": gbm.seed,
        },
        "preprocess": {
            "target_size": list(config.preprocess.target_size),
            "channel_mean": list(config.preprocess.channel_mean),
            "channel_std": list(config.preprocess.channel_std),
        },
    }


def _default_mode() -> int:
    umask = os.umask(0)
    os.umask(umask)
    return 0o666 & ~umask


def _atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, _default_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str):
    _atomic_write_bytes(path, text.encode("utf-8"))


def _atomic_render(path, render):
    """Render a figure through a temp file so partial output never lands."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
    os.close(fd)
    try:
        render(tmp)
        os.chmod(tmp, _default_mode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _extract_features_from_manifest(config: RunConfig, entries=None):
    store = load_weights_file(_require(config.weights_path, "weights path"))
    model = build_model(store)
    if entries is None:
        entries = load_manifest(_require(config.manifest_path, "manifest path"))
    rows = []
    for start in range(0, len(entries), EXTRACT_BATCH):
        batch_entries = entries[start : start + EXTRACT_BATCH]
        tensors = []
        for entry in batch_entries:
            with open(entry.path, "rb") as fh:
                tensors.append(preprocess_image(fh.read(), config.preprocess))
        rows.append(model.extract_features(np.stack(tensors)))
    values = (
        np.concatenate(rows) if rows else np.zeros((0, 2048), dtype=np.float32)
    )
    labels = np.array([e.label.value for e in entries], dtype=np.int32)
    return FeatureCache(values=values, labels=labels), [e.path for e in entries]


def cmd_extract(args) -> int:
    config = resolve_config(args)
    entries = load_manifest(_require(config.manifest_path, "manifest path"))
    stats = dataset_stats(entries)
    print(
        f"manifest counts: negative={stats.negative} neutral={stats.neutral} "
        f"positive={stats.positive} total={stats.total}"
    )
    cache, _ = _extract_features_from_manifest(config, entries)
    out = _require(config.cache_path, "cache output path")
    _atomic_write_bytes(out, write_feature_cache(cache))
    print(f"wrote feature cache: {out} ({cache.n_rows} rows x 2048 columns)")
    return 0


def _read_cache(config: RunConfig) -> FeatureCache:
    path = _require(config.cache_path, "cache path")
    with open(path, "rb") as fh:
        return read_feature_cache(fh.read())


def cmd_train(args) -> int:
    config = resolve_config(args)
    cache = _read_cache(config)
    warning = config.gbm.tuning_range_warning()
    if warning:
        print(f"warning: {warning}", file=sys.stderr)
    model = fit(cache.values, cache.labels, config.gbm)
    out = _require(config.model_path, "model output path")
    _atomic_write_bytes(out, save_model(model))
    summary = {
        "rounds_completed": model.rounds_completed,
        "final_train_log_loss": model.train_loss[-1],
        "model_path": str(out),
        "config": _config_echo(config),
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_cv(args) -> int:
    config = resolve_config(args)
    if config.k_folds < 2:
        raise ValueError(f"cross-validation needs k_folds >= 2, got {config.k_folds}")
    cache = _read_cache(config)
    names = class_names(config.gbm.num_classes)
    present = np.bincount(cache.labels, minlength=config.gbm.num_classes)
    for k, count in enumerate(present):
        if count == 0:
            raise ValueError(f"class {names[k]} is absent from the cache; cannot cross-validate")
    dataset = config.dataset or Path(_require(config.cache_path, "cache path")).stem
    warning = config.gbm.tuning_range_warning()
    if warning:
        print(f"warning: {warning}", file=sys.stderr)

    result = cross_validate(
        cache.values, cache.labels, config.gbm,
        k=config.k_folds, seed=config.seed, dataset=dataset,
    )
    document = report.cv_report_document(result, dataset, _config_echo(config))

    report_path = Path(_require(config.report_path, "report output path"))
    _atomic_write_text(report_path, report.report_json(document))
    stem = report_path.parent / report_path.stem
    roc_path = Path(f"{stem}_roc.csv")
    folds_path = Path(f"{stem}_folds.csv")
    _atomic_write_text(roc_path, report.roc_csv(result.pooled_curves, config.gbm.num_classes))
    _atomic_write_text(folds_path, report.fold_accuracy_csv(result.fold_accuracies))
    written = [report_path, roc_path, folds_path]
    if config.figures:
        targets = {
            f"{stem}_folds.png": lambda p: figures.plot_fold_accuracies(
                p, result.fold_accuracies, dataset
            ),
            f"{stem}_roc.png": lambda p: figures.plot_roc_curves(
                p, result.pooled_curves, result.pooled_auc, dataset
            ),
            f"{stem}_confusion.png": lambda p: figures.plot_confusion(
                p, result.pooled_confusion, dataset
            ),
        }
        for target, render in targets.items():
            _atomic_render(target, render)
            written.append(Path(target))

    print(f"dataset: {dataset}")
    print(
        f"cv accuracy: {document['accuracy']:.4f} "
        f"(std {document['aggregate_std']['accuracy']:.4f} over {config.k_folds} folds)"
    )
    for name in names:
        block = document["classes"][name]
        print(
            f"  {name}: precision={block['precision']:.4f} recall={block['recall']:.4f} "
            f"f1={block['f1']:.4f} auc={block['auc']:.4f}"
        )
    print("wrote: " + " ".join(str(p) for p in written))
    return 0


def cmd_predict(args) -> int:
    config = resolve_config(args)
    with open(_require(config.model_path, "model path"), "rb") as fh:
        model = load_model(fh.read())
    if config.cache_path:
        cache = _read_cache(config)
        features = cache.values
        ids = [f"row{i}" for i in range(cache.n_rows)]
    elif config.manifest_path:
        cache, ids = _extract_features_from_manifest(config)
        features = cache.values
    else:
        raise ValueError("predict needs either a feature cache or a manifest + weights")

    proba = predict_proba(model, features)
    predicted = predict_class(model, features)
    names = class_names(model.config.num_classes)
    lines = ["path," + ",".join(names) + ",predicted"]
    for i, identifier in enumerate(ids):
        probs = ",".join(repr(float(p)) for p in proba[i])
        lines.append(f"{identifier},{probs},{names[predicted[i]]}")
    text = "\n".join(lines) + "\n"
    if config.out_path:
        _atomic_write_text(config.out_path, text)
        print(f"wrote predictions: {config.out_path} ({len(ids)} rows)")
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    reports = []
    for path in args.reports:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                document = json.load(fh)
            if "accuracy" not in document:
                raise ValueError("missing 'accuracy' key")
            reports.append(document)
        except (OSError, ValueError) as exc:
            print(f"warning: skipping unreadable report {path}: {exc}", file=sys.stderr)
    if not reports:
        print("error: no readable reports", file=sys.stderr)
        return 2
    sys.stdout.write(report.comparison_table(reports))
    out = getattr(args, "out", None)
    if out:
        _atomic_write_text(out, report.comparison_csv(reports))
        print(f"wrote comparison: {out}")
    return 0


def _add_gbm_flags(parser):
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--lambda-l2", dest="lambda_l2", type=float)
    parser.add_argument("--alpha-l1", dest="alpha_l1", type=float)
    parser.add_argument("--gamma", dest="gamma_min_gain", type=float)
    parser.add_argument("--max-depth", dest="max_depth", type=int)
    parser.add_argument("--n-rounds", dest="n_rounds", type=int)
    parser.add_argument("--min-child-weight", dest="min_child_weight", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run-configuration file")
    common.add_argument("--seed", type=int, help="random seed (default 0)")

    parser = argparse.ArgumentParser(
        prog="sentiboost",
        description="Deep-feature visual sentiment pipeline: extract, train, evaluate.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[common], help="run images through the CNN into a feature cache")
    p.add_argument("--weights", help="DFWS weight container")
    p.add_argument("--manifest", help="path,label manifest CSV")
    p.add_argument("--cache", help="output feature-cache path (DFFC)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train the boosted classifier on a feature cache")
    p.add_argument("--cache", help="input feature cache (DFFC)")
    p.add_argument("--model", help="output model path (DFGB)")
    _add_gbm_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", parents=[common], help="stratified k-fold cross-validation with report + figures")
    p.add_argument("--cache", help="input feature cache (DFFC)")
    p.add_argument("--report", help="output report JSON path")
    p.add_argument("--k-folds", dest="k_folds", type=int)
    p.add_argument("--dataset", help="dataset name recorded in the report")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    _add_gbm_flags(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", parents=[common], help="classify a cache or manifest of images")
    p.add_argument("--model", help="trained model (DFGB)")
    p.add_argument("--cache", help="feature cache to classify")
    p.add_argument("--manifest", help="manifest of images to classify (needs --weights)")
    p.add_argument("--weights", help="DFWS weights for on-the-fly extraction")
    p.add_argument("--out", help="output CSV path (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", parents=[common], help="tabulate report accuracies against published baselines")
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.add_argument("--out", help="optional comparison CSV output")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SentiboostError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
