"""Command-line entry point: ``disorder-unet <command>``.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 format error,
5 numeric/validation error. Failures print one line ``error[<category>]: ...``
to stderr.
"""

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .arch_search import REFERENCE_PARAM_COUNT, search
from .checkpoint import load_checkpoint, save_params
from .datasets import (
    Dataset,
    EmbeddingStandardizer,
    assemble_dataset,
    embedding_path,
    load_records,
    parse_fasta,
    read_embedding,
    read_id_list,
)
from .errors import (
    DisorderUnetError,
    FormatError,
    MissingEmbeddingError,
    ShapeError,
    UndefinedMetricError,
    ValidationError,
)
from .metrics import UNKNOWN, ScoredResidues, aggregate, score_target
from .predictions import profile_csv, read_prediction_dir, write_prediction
from .synthetic import write_toy_dataset
from .trainer import TrainConfig, ensemble_predict, prepare_samples, stratified_folds, train, train_fold_member
from .unet import ModelConfig, param_count

log = logging.getLogger("disorder_unet")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4, 5
THREADS_ENV = "DISORDER_UNET_THREADS"


class UsageError(DisorderUnetError):
    category = "usage"


# -- config files --


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _coerce(value, kind):
    if kind is bool:
        v = str(value).lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"not a boolean: {value!r}")
    if kind is tuple:
        return tuple(int(v) for v in str(value).replace(",", " ").split())
    return kind(value)


_MODEL_TYPES = {"input_dim": int, "filters_per_level": tuple, "kernel_len": int, "dropout_rate": float,
                "use_onehot_input": bool, "num_classes": int, "max_len": int, "up_kernel": int, "gate_reduction": int}
_TRAIN_TYPES = {f.name: f.type for f in fields(TrainConfig)}
_RUN_KEYS = {"train", "validation", "embeddings", "folds", "fold", "mode", "exclude", "validation_fraction", "out", "threads"}


def resolve_train_settings(cfg, base_dir):
    unknown = set(cfg) - set(_MODEL_TYPES) - set(_TRAIN_TYPES) - _RUN_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    try:
        model = ModelConfig(**{k: _coerce(cfg[k], t) for k, t in _MODEL_TYPES.items() if k in cfg})
        tc = TrainConfig(**{k: _coerce(cfg[k], t) for k, t in _TRAIN_TYPES.items() if k in cfg})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DisorderUnetError):
            raise
        raise UsageError(f"bad config value: {exc}") from None

    def path(v):
        p = Path(v)
        return p if p.is_absolute() else (base_dir / p)

    if "train" not in cfg or "embeddings" not in cfg:
        raise UsageError("config needs 'train' and 'embeddings'")
    run = {
        "train": [path(p.strip()) for p in cfg["train"].split(",") if p.strip()],
        "validation": [path(p.strip()) for p in cfg.get("validation", "").split(",") if p.strip()],
        "embeddings": path(cfg["embeddings"]),
        "folds": path(cfg["folds"]) if cfg.get("folds") else None,
        "fold": int(cfg["fold"]) if cfg.get("fold") else None,
        "mode": cfg.get("mode", "ensemble" if cfg.get("folds") and not cfg.get("fold") else "single"),
        "exclude": path(cfg["exclude"]) if cfg.get("exclude") else None,
        "validation_fraction": float(cfg.get("validation_fraction", 0.1)),
        "out": path(cfg["out"]) if cfg.get("out") else None,
    }
    if run["mode"] not in ("single", "ensemble"):
        raise UsageError(f"mode must be 'single' or 'ensemble', got {run['mode']!r}")
    return model, tc, run


# -- manifests --


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def write_manifest(out_dir, command, params, inputs, outputs, started, config_path=None, seed=None):
    manifest = {
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "parameters": _jsonable(params),
        "seed": seed,
        "inputs": _jsonable(inputs),
        "outputs": _jsonable(outputs),
        "tool_version": __version__,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    Path(out_dir, "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _threads(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else 1


# -- commands --


def cmd_train(args):
    started = _now()
    cfg = read_config(args.config)
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip()] = v.strip()
    if args.out:
        cfg["out"] = str(Path(args.out).resolve())
    model, tc, run = resolve_train_settings(cfg, Path(args.config).resolve().parent)
    if run["out"] is None:
        raise UsageError("no output directory (config 'out' or --out)")
    if not run["embeddings"].is_dir():
        raise FileNotFoundError(f"embedding directory not found: {run['embeddings']}")
    exclude = read_id_list(run["exclude"]) if run["exclude"] else None
    data = assemble_dataset(run["train"], run["embeddings"], exclude, max_len=model.max_len)
    _check_labels(data)
    out = run["out"]
    outputs = []
    if run["mode"] == "single" and run["fold"] is None:
        if run["validation"]:
            val = assemble_dataset(run["validation"], run["embeddings"], exclude, max_len=model.max_len)
            _check_labels(val)
            tr, va = data, val
        else:
            order = np.random.default_rng(tc.seed).permutation(len(data))
            n_val = max(1, int(round(run["validation_fraction"] * len(data))))
            if n_val >= len(data):
                raise ValidationError("dataset too small to hold out a validation split")
            va, tr = data.subset(sorted(order[:n_val])), data.subset(sorted(order[n_val:]))
        std = EmbeddingStandardizer().fit(tr.X())
        params, history = train(model, tc, _samples(model, tr, std), _samples(model, va, std))
        out.mkdir(parents=True, exist_ok=True)
        save_params(out / "model.dunl", model, params, std)
        (out / "history.csv").write_text(history.to_csv())
        outputs = ["model.dunl", "history.csv"]
    else:
        if run["folds"] is None:
            raise UsageError("ensemble / per-fold training needs a 'folds' file")
        fold_of = _read_folds(run["folds"], data)
        wanted = sorted(set(fold_of)) if run["fold"] is None else [run["fold"]]
        if run["fold"] is not None and run["fold"] not in set(fold_of):
            raise UsageError(f"fold {run['fold']} not present in {run['folds']}")
        raw = [(r.id, data.embeddings[r.id], r.labels) for r in data.records]
        seqs = data.sequences()

        def work(fold):
            return train_fold_member(model, tc, raw, fold_of, fold, seqs)

        with ThreadPoolExecutor(max_workers=_threads(args)) as pool:
            results = list(pool.map(work, wanted))
        out.mkdir(parents=True, exist_ok=True)
        for fold, (ckpt, history) in zip(wanted, results):
            save_params(out / f"member_{fold:02d}.dunl", ckpt.config, ckpt.params, ckpt.standardizer)
            (out / f"history_{fold:02d}.csv").write_text(history.to_csv())
            outputs += [f"member_{fold:02d}.dunl", f"history_{fold:02d}.csv"]
    params_map = {"model": model.to_dict(), "train": tc.to_dict(), "run": run}
    write_manifest(out, "train", params_map, {"config": args.config}, outputs, started, args.config, tc.seed)
    return EXIT_OK


def _samples(model, ds, std):
    return prepare_samples(model, ds.ids, ds.X(), ds.y(), ds.sequences(), std)


def _check_labels(ds):
    unlabeled = [r.id for r in ds.records if r.labels is None]
    if unlabeled:
        raise ValidationError(f"training records need labels; unlabeled: {', '.join(unlabeled[:5])}")


def _read_folds(path, data):
    assignment = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            assignment[row["id"]] = int(row["fold"])
    missing = [i for i in data.ids if i not in assignment]
    if missing:
        raise ValidationError(f"{len(missing)} record(s) have no fold: {', '.join(missing[:5])}")
    return np.array([assignment[i] for i in data.ids])


def cmd_predict(args):
    started = _now()
    members = [load_checkpoint(p) for p in args.checkpoint]
    records = parse_fasta(args.fasta)
    missing = [r.id for r in records if not embedding_path(args.embeddings, r.id).exists()]
    if missing:
        raise MissingEmbeddingError(missing)
    embs = {}
    for r in records:
        emb = read_embedding(embedding_path(args.embeddings, r.id))
        if emb.length != len(r):
            raise ShapeError(f"{r.id}: embedding has {emb.length} rows, sequence has {len(r)} residues")
        embs[r.id] = emb.values
    profiles = [ensemble_predict(members, embs[r.id], sequence=r.sequence, target_id=r.id) for r in records]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = [write_prediction(p, out).name for p in profiles]
    write_manifest(
        out, "predict", {"checkpoints": args.checkpoint},
        {"fasta": args.fasta, "embeddings": args.embeddings}, written, started,
    )
    return EXIT_OK


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def evaluate_predictions(predictions, references, mode="pdb", exclusion_ids=None):
    """Score prediction profiles against references.

    Returns ``(per_target_rows, aggregate_dict, skipped)`` where ``skipped``
    lists ``(id, reason)`` for references that could not be scored.
    """
    excluded = set(exclusion_ids or ())
    targets, rows, skipped = [], [], []
    for ref in sorted(references, key=lambda r: r.id):
        if ref.id in excluded:
            continue
        if ref.labels is None:
            raise FormatError(f"reference {ref.id} has no labels")
        if mode == "nox" and (ref.labels == UNKNOWN).any():
            raise FormatError(f"reference {ref.id} has unknown residues, not allowed in nox mode")
        pred = predictions.get(ref.id)
        if pred is None:
            skipped.append((ref.id, "missing prediction"))
            continue
        if pred.scores.size != len(ref):
            skipped.append((ref.id, f"length mismatch: {pred.scores.size} scores vs {len(ref)} residues"))
            continue
        scored = ScoredResidues(pred.scores, ref.labels, ref.id)
        try:
            rows.append(score_target(scored))
        except UndefinedMetricError as exc:
            skipped.append((ref.id, str(exc)))
            continue
        targets.append(scored)
    if not targets:
        raise UndefinedMetricError("no target could be scored")
    return rows, aggregate(targets, "both"), skipped


def cmd_evaluate(args):
    started = _now()
    if args.mode not in ("pdb", "nox"):
        raise UsageError("mode must be pdb or nox")
    predictions = read_prediction_dir(args.predictions)
    references = load_records(args.reference)
    exclusion = read_id_list(args.exclude) if args.exclude else None
    rows, agg, skipped = evaluate_predictions(predictions, references, args.mode, exclusion)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per = io.StringIO()
    w = csv.writer(per, lineterminator="\n")
    w.writerow(["id", "n_residues", "n_disordered", "roc_auc", "mcc", "f1", "degenerate"])
    for r in rows:
        w.writerow([r.target_id, r.n_residues, r.n_disordered, _fmt(r.auc), _fmt(r.mcc), _fmt(r.f1), int(r.degenerate)])
    (out / "per_target.csv").write_text(per.getvalue())
    ag = io.StringIO()
    w = csv.writer(ag, lineterminator="\n")
    w.writerow(["aggregation", "mode", "n_targets", "n_residues", "roc_auc", "mcc", "f1", "degenerate"])
    for name in ("pooled", "per_target"):
        r = agg[name]
        w.writerow([name, args.mode, len(rows), r.n_residues, _fmt(r.auc), _fmt(r.mcc), _fmt(r.f1), int(r.degenerate)])
    (out / "aggregate.csv").write_text(ag.getvalue())
    sk = io.StringIO()
    w = csv.writer(sk, lineterminator="\n")
    w.writerow(["id", "reason"])
    w.writerows(skipped)
    (out / "skipped.csv").write_text(sk.getvalue())
    for rid, reason in skipped:
        log.warning("skipped %s: %s", rid, reason)
    write_manifest(
        out, "evaluate", {"mode": args.mode},
        {"predictions": args.predictions, "reference": args.reference, "exclude": args.exclude},
        ["per_target.csv", "aggregate.csv", "skipped.csv"], started,
    )
    return EXIT_OK


def cmd_profile(args):
    predictions = read_prediction_dir(args.predictions)
    absent = [i for i in args.ids if i not in predictions]
    if absent:
        raise LookupError(f"no prediction for id(s): {', '.join(absent)}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rid in args.ids:
        (out / f"{rid}.profile.csv").write_text(profile_csv(predictions[rid]))
    return EXIT_OK


def cmd_folds(args):
    started = _now()
    exclude = set(read_id_list(args.exclude)) if args.exclude else set()
    seen = {}
    for src in args.reference:
        for r in load_records(src):
            if r.id not in exclude:
                seen.setdefault(r.id, r)
    records = list(seen.values())
    folds = stratified_folds([len(r) for r in records], [r.disorder_ratio for r in records], args.k, args.seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "fold"])
    for r, f in zip(records, folds):
        w.writerow([r.id, int(f)])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(buf.getvalue())
    write_manifest(out.parent, "folds", {"k": args.k}, {"reference": args.reference}, [out.name], started, seed=args.seed)
    return EXIT_OK


def cmd_search_arch(args):
    for c in search(args.target, args.input_dim, top=args.top):
        print(c.describe())
    return EXIT_OK


def cmd_make_toy(args):
    write_toy_dataset(args.out, n=args.n, length=args.length, dim=args.dim, seed=args.seed)
    Path(args.out, "train.cfg").write_text(
        "# toy configuration written by make-toy\n"
        "train = references.txt\n"
        "embeddings = embeddings\n"
        f"input_dim = {args.dim}\n"
        "filters_per_level = 8, 16, 16\n"
        f"max_len = {max(8, -(-args.length // 4) * 4)}\n"
        "dropout_rate = 0.1\n"
        "max_epochs = 30\n"
        "validation_fraction = 0.25\n"
        f"seed = {args.seed}\n"
    )
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="disorder-unet", description="Per-residue protein disorder prediction.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model or a fold ensemble from a config file")
    t.add_argument("config")
    t.add_argument("--out")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    t.add_argument("--threads", type=int, help=f"parallel fold members (default ${THREADS_ENV} or 1)")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="write per-sequence prediction files")
    pr.add_argument("--checkpoint", nargs="+", required=True)
    pr.add_argument("--fasta", required=True)
    pr.add_argument("--embeddings", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="score predictions against a reference")
    e.add_argument("--predictions", required=True)
    e.add_argument("--reference", required=True)
    e.add_argument("--mode", choices=("pdb", "nox"), default="pdb")
    e.add_argument("--exclude", help="file with ids to drop before scoring")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    pf = sub.add_parser("profile", help="per-residue CSV profiles for plotting")
    pf.add_argument("--predictions", required=True)
    pf.add_argument("--ids", nargs="+", required=True)
    pf.add_argument("--out", required=True)
    pf.set_defaults(func=cmd_profile)

    f = sub.add_parser("folds", help="stratified fold assignment")
    f.add_argument("--reference", nargs="+", required=True)
    f.add_argument("--k", type=int, default=10)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--exclude")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_folds)

    s = sub.add_parser("search-arch", help="rank layouts by distance to a parameter count")
    s.add_argument("--target", type=int, default=REFERENCE_PARAM_COUNT)
    s.add_argument("--input-dim", type=int, default=1024)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_search_arch)

    m = sub.add_parser("make-toy", help="write a small synthetic dataset and config")
    m.add_argument("--out", required=True)
    m.add_argument("--n", type=int, default=24)
    m.add_argument("--length", type=int, default=48)
    m.add_argument("--dim", type=int, default=16)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_make_toy)
    return p


def exit_code_for(exc):
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, FormatError):
        return EXIT_FORMAT
    if isinstance(exc, (MissingEmbeddingError, OSError, LookupError)):
        return EXIT_IO
    if isinstance(exc, (ValidationError, ShapeError, UndefinedMetricError, ValueError, FloatingPointError)):
        return EXIT_NUMERIC
    return 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        code = exit_code_for(exc)
        if code == 1:
            raise
        category = getattr(exc, "category", None) or ("io" if code == EXIT_IO else "error")
        message = str(exc).replace("\n", " ")
        print(f"error[{category}]: {message}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
