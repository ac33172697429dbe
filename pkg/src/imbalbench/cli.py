"""Command-line front end.

Every subcommand writes its artifacts into ``--out-dir`` (default:
``$IMBALBENCH_OUT_DIR`` or ``./runs``) followed by a ``<command>_manifest.json``
listing them. Failures print one JSON object to stderr and exit non-zero
(2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from . import dataset as dsmod
from . import losses, metrics, model as modelmod, similarity, synth, trainer
from .kernels import BACKEND

OUT_DIR_ENV = "IMBALBENCH_OUT_DIR"

CONFIG_KEYS = {"epochs", "batch_size", "base_lr", "momentum", "lr_step_epochs", "lr_factor",
               "loss", "seed", "augment", "replications", "hidden_dim", "freeze_body", "ratios"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- helpers -----------------------------------------------------------------

def _floats(text, n=None):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _ratios(values) -> dsmod.SplitRatios:
    try:
        return dsmod.SplitRatios(*values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "runs")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(out: Path, command: str, config, seeds, artifacts, started) -> Path:
    path = out / f"{command}_manifest.json"
    _write_json(path, {
        "command": command,
        "toolkit_version": __version__,
        "kernel_backend": BACKEND,
        "config": config,
        "seeds": seeds,
        "artifacts": [{"path": str(p), "sha256": _sha256(p)} for p in artifacts],
        "started_at": started,
        "finished_at": _now(),
    })
    return path


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    return cfg


def resolve_config(args, counts) -> tuple:
    """Merge flag > file > default; returns (TrainConfig, ModelArch kwargs, ratios, snapshot)."""
    cfg = load_config(args.config)
    overrides = {"epochs": args.epochs, "batch_size": args.batch_size, "seed": args.seed,
                 "replications": getattr(args, "replications", None),
                 "hidden_dim": args.hidden_dim, "base_lr": args.lr}
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.loss is not None:
        cfg["loss"] = {"kind": args.loss}
    if args.ratios is not None:
        cfg["ratios"] = _floats(args.ratios, 3)

    loss_cfg = cfg.get("loss", {"kind": "CE"})
    try:
        loss = losses.LossSpec.from_config(loss_cfg, counts)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad loss config: {exc}") from None
    augment = cfg.get("augment")
    train_kwargs = {k: cfg[k] for k in ("epochs", "batch_size", "base_lr", "momentum",
                                        "lr_step_epochs", "lr_factor", "seed", "replications")
                    if k in cfg}
    try:
        tcfg = trainer.TrainConfig(
            loss=loss, augment=dsmod.AugmentPolicy.from_dict(augment) if augment else None,
            **train_kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training config: {exc}") from None
    ratios = _ratios(cfg.get("ratios", (0.65, 0.20, 0.15)))
    arch_kwargs = {"hidden_dim": int(cfg.get("hidden_dim", 0)),
                   "freeze_body": bool(cfg.get("freeze_body", False))}
    snapshot = tcfg.to_dict()
    snapshot.update(arch_kwargs)
    snapshot["ratios"] = [ratios.train, ratios.val, ratios.test]
    return tcfg, arch_kwargs, ratios, snapshot


def _subset(args, ds):
    """Pick the evaluation subset from a manifest or a re-derived split."""
    if args.subset == "all":
        return ds
    if args.split_manifest:
        parts = dsmod.read_split_manifest(args.split_manifest, ds)
    else:
        ratios = _ratios(_floats(args.ratios, 3)) if args.ratios else dsmod.SplitRatios()
        parts = dsmod.stratified_split(ds, ratios, args.split_seed)
    return parts[dsmod.SUBSETS.index(args.subset)]


# -- commands ----------------------------------------------------------------

def cmd_synth(args) -> int:
    started = _now()
    counts = [int(c) for c in _floats(args.counts)]
    out = _out_dir(args)
    if args.raster:
        target = out / (args.name or "synth_rasters")
        synth.write_raster_dir(target, counts, size=args.size, channels=args.channels,
                               seed=args.seed)
        artifacts = sorted(p for p in target.rglob("*") if p.is_file())
    else:
        target = out / (args.name or "synth.csv")
        ds = synth.make_blobs(counts, dim=args.dim, separation=args.separation,
                              noise=args.noise, seed=args.seed)
        dsmod.write_feature_csv(ds, target)
        artifacts = [target]
    config = {"counts": counts, "raster": args.raster, "dim": args.dim,
              "separation": args.separation, "noise": args.noise, "size": args.size,
              "channels": args.channels}
    _write_manifest(out, "synth", config, {"seed": args.seed}, artifacts, started)
    print(target)
    return 0


def cmd_split(args) -> int:
    started = _now()
    ratios = _ratios(_floats(args.ratios, 3) if args.ratios else (0.65, 0.20, 0.15))
    ds = dsmod.load_dataset(args.data, args.format)
    train_set, val_set, test_set = dsmod.stratified_split(ds, ratios, args.seed)
    out = _out_dir(args)
    path = out / "split.csv"
    dsmod.write_split_manifest(path, ds, train_set, val_set, test_set)
    width = max(len(n) for n in ds.class_names)
    peak = max(ds.counts)
    for k, name in enumerate(ds.class_names):
        sizes = [int(p.counts[k]) for p in (train_set, val_set, test_set)]
        bar = "#" * max(1, round(40 * ds.counts[k] / peak))
        print(f"{name:<{width}}  train={sizes[0]:<5d} val={sizes[1]:<5d} test={sizes[2]:<5d} {bar}")
    _write_manifest(out, "split", {"data": str(args.data), "ratios": [ratios.train, ratios.val, ratios.test]},
                    {"seed": args.seed}, [path], started)
    return 0


def _read_counts_csv(path):
    names, counts = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["class_name", "count"]:
            raise ValueError(f"{path}: header must be `class_name,count`")
        for row in reader:
            names.append(row["class_name"])
            counts.append(int(row["count"]))
    return names, counts


def cmd_weights(args) -> int:
    started = _now()
    if args.strategy == "explicit" and not args.explicit_file:
        raise UsageError("--strategy explicit requires --explicit-file")
    if args.strategy != "explicit" and not (args.data or args.counts_csv):
        raise UsageError("--data or --counts-csv is required")
    names = counts = None
    if args.counts_csv:
        names, counts = _read_counts_csv(args.counts_csv)
    elif args.data:
        ds = dsmod.load_dataset(args.data, args.format)
        names, counts = list(ds.class_names), [int(c) for c in ds.counts]
    if args.strategy == "explicit":
        file_names, weights = losses.read_weights_csv(args.explicit_file)
        if names is not None and list(file_names) != list(names):
            raise ValueError("explicit weight classes do not match the dataset classes")
        names = file_names
    elif args.strategy == "uniform":
        weights = losses.uniform_weights(len(counts))
    else:
        weights = losses.inverse_proportion_weights(dsmod.ClassCounts(tuple(counts)))
    out = _out_dir(args)
    path = out / "weights.csv"
    losses.write_weights_csv(path, names, weights)
    for n, w in zip(names, weights.w):
        print(f"{n},{w:.4f}")
    _write_manifest(out, "weights", {"strategy": args.strategy, "counts": counts,
                                     "class_names": names}, {}, [path], started)
    return 0


def cmd_train(args) -> int:
    started = _now()
    ds = dsmod.load_dataset(args.data, args.format)
    tcfg, arch_kwargs, ratios, snapshot = resolve_config(args, ds.class_counts())
    arch = modelmod.ModelArch(ds.input_dim, ds.n_classes, **arch_kwargs)
    train_set, val_set, test_set = dsmod.stratified_split(ds, ratios, tcfg.seed)
    model, history = trainer.train(train_set, val_set, arch, tcfg)
    out = _out_dir(args)
    paths = [out / "split.csv", out / "model.json", out / "history.csv"]
    dsmod.write_split_manifest(paths[0], ds, train_set, val_set, test_set)
    modelmod.save_checkpoint(model, paths[1])
    history.write_csv(paths[2])
    if len(history):
        print(f"epochs={len(history)} train_f1={history.train_f1[-1]:.4f} "
              f"val_f1={history.val_f1[-1]:.4f}")
    _write_manifest(out, "train", snapshot, {"seed": tcfg.seed}, paths, started)
    return 0


def cmd_eval(args) -> int:
    started = _now()
    ds = dsmod.load_dataset(args.data, args.format)
    model = modelmod.load_checkpoint(args.model)
    part = _subset(args, ds)
    if len(part) == 0:
        raise ValueError(f"subset {args.subset!r} is empty")
    cm = metrics.confusion_matrix(modelmod.predict(model, part.flat_inputs()), part.labels,
                                  ds.n_classes, ds.class_names)
    report = metrics.metrics_report(cm)
    out = _out_dir(args)
    paths = [out / "confusion_counts.csv", out / "confusion_normalized.csv", out / "metrics.json"]
    metrics.write_confusion_csv(paths[0], cm, normalized=False)
    metrics.write_confusion_csv(paths[1], cm, normalized=True)
    doc = report.to_dict()
    doc.update(subset=args.subset, n_samples=cm.total, class_names=list(ds.class_names))
    _write_json(paths[2], doc)
    print(f"micro_f1={report.micro_f1:.4f} on {cm.total} {args.subset} samples")
    _write_manifest(out, "eval", {"model": str(args.model), "data": str(args.data),
                                  "subset": args.subset}, {"split_seed": args.split_seed},
                    paths, started)
    return 0


def cmd_benchmark(args) -> int:
    started = _now()
    ds = dsmod.load_dataset(args.data, args.format)
    tcfg, arch_kwargs, ratios, snapshot = resolve_config(args, ds.class_counts())
    arch = modelmod.ModelArch(ds.input_dim, ds.n_classes, **arch_kwargs)
    report = trainer.run_benchmark(ds, arch, tcfg, ratios)
    out = _out_dir(args)
    paths = [out / "benchmark_report.json", out / "benchmark_report.csv",
             out / "benchmark_scores.json"]
    report.write_json(paths[0])
    report.write_csv(paths[1])
    scores = report.to_dict()
    for timing in ("train_time_s", "inference_ms"):
        scores.pop(timing)
    _write_json(paths[2], scores)
    row = report.table_row()
    print(f"{row['model']}: test F1 {row['testing_f1']} over {len(report.test_f1)} replications")
    _write_manifest(out, "benchmark", snapshot,
                    {"master_seed": tcfg.seed, "replication_seeds": list(report.replication_seeds)},
                    paths, started)
    return 0


def cmd_similarity(args) -> int:
    started = _now()
    ds = dsmod.load_dataset(args.data, args.format)
    model = modelmod.load_checkpoint(args.model)
    scfg = similarity.SimilarityConfig(args.pairs, args.seed, args.subset)
    sm = similarity.similarity_matrix(model, _subset(args, ds), scfg)
    out = _out_dir(args)
    path = out / "similarity.csv"
    sm.write_csv(path)
    _write_manifest(out, "similarity", {"model": str(args.model), "data": str(args.data),
                                        "pairs_per_cell": args.pairs, "subset": args.subset},
                    {"seed": args.seed, "split_seed": args.split_seed}, [path], started)
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="imbalbench", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True, help="dataset directory or feature CSV")
            sp.add_argument("--format", choices=dsmod.FORMATS, default=None)
        sp.add_argument("--out-dir", default=None)

    def training(sp):
        sp.add_argument("--config", default=None, help="JSON run config")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", type=int)
        sp.add_argument("--lr", type=float)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--hidden-dim", type=int)
        sp.add_argument("--loss", choices=losses.LOSS_KINDS)
        sp.add_argument("--ratios", default=None)

    def subset(sp):
        sp.add_argument("--subset", choices=("train", "val", "test", "all"), default="test")
        sp.add_argument("--split-manifest", default=None)
        sp.add_argument("--split-seed", type=int, default=0)
        sp.add_argument("--ratios", default=None)

    sp = sub.add_parser("synth", help="write a seeded synthetic dataset")
    common(sp, data=False)
    sp.add_argument("--counts", default=",".join(map(str, synth.IMBALANCED_COUNTS)))
    sp.add_argument("--dim", type=int, default=16)
    sp.add_argument("--separation", type=float, default=3.0)
    sp.add_argument("--noise", type=float, default=1.0)
    sp.add_argument("--raster", action="store_true", help="write PGM/PPM class folders")
    sp.add_argument("--size", type=int, default=8)
    sp.add_argument("--channels", type=int, choices=(1, 3), default=1)
    sp.add_argument("--name", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("split", help="stratified train/val/test split manifest")
    common(sp)
    sp.add_argument("--ratios", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("weights", help="per-class loss weights")
    common(sp, data=False)
    sp.add_argument("--data", default=None)
    sp.add_argument("--format", choices=dsmod.FORMATS, default=None)
    sp.add_argument("--counts-csv", default=None, help="CSV `class_name,count`")
    sp.add_argument("--strategy", choices=("inverse_proportion", "uniform", "explicit"),
                    default="inverse_proportion")
    sp.add_argument("--explicit-file", default=None, help="CSV `class_name,weight`")
    sp.set_defaults(func=cmd_weights)

    sp = sub.add_parser("train", help="train one model")
    common(sp)
    training(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("benchmark", help="replicated train/test benchmark")
    common(sp)
    training(sp)
    sp.add_argument("--replications", type=int)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("eval", help="confusion matrix and micro-F1 of a checkpoint")
    common(sp)
    sp.add_argument("--model", required=True)
    subset(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("similarity", help="inter-class cosine similarity matrix")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--pairs", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    subset(sp)
    sp.set_defaults(func=cmd_similarity)
    return p


def _fail(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except (dsmod.DatasetError, ValueError, OSError, FloatingPointError, KeyError) as exc:
        return _fail("runtime", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
