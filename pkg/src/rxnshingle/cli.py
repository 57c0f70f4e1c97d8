"""Command-line interface.

Errors exit non-zero and print one JSON object to stderr:
``{"error": "<ExceptionName>", "message": "...", "command": "<subcommand>"}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .canon import canonical_smiles, canonicalize
from .exceptions import EmptyDataset, MissingColumn, ParseError, RxnShingleError
from .fileio import (
    atomic_write,
    attach_coords,
    canonical_json,
    load_coords,
    load_dataset,
    read_json,
    version_string,
    write_json,
)
from .fingerprints import BitFingerprint, drfp
from .model import ModelConfig, ShingleTransformer
from .molecule import LabeledReaction, Reaction, split_by_pivot, split_random
from .permtest import OrderSensitivePredictor, permutation_test
from .shingles import MODES, reaction_shingles
from .smiles import parse_reaction_smiles
from .training import TrainConfig, finetune, kmeans, pretrain, pseudo_labels

log = logging.getLogger("rxnshingle")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------------------
# helpers


def _emit_error(exc: BaseException, command: str | None):
    payload = {"error": type(exc).__name__, "message": str(exc), "command": command}
    if isinstance(exc, ParseError):
        payload["row"] = exc.row
    sys.stderr.write(canonical_json(payload) + "\n")


def _warn_json(message, category, filename=None, lineno=None, file=None, line=None):
    sys.stderr.write(canonical_json({"warning": category.__name__, "message": str(message)}) + "\n")


def _write_csv(path, header: list[str], rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(path, buf.getvalue())


def _read_reaction_file(path, label_type: str = "float", coords: str | None = None):
    """Dataset rows from CSV/JSONL, or one reaction SMILES per line for other suffixes."""
    suffix = Path(path).suffix.lower()
    if suffix in (".txt", ".smi", ".rsmi"):
        records = []
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh, start=1):
                text = line.strip()
                if text:
                    try:
                        records.append(LabeledReaction(Reaction.from_smiles(text, id=f"row{i}")))
                    except RxnShingleError as exc:
                        raise ParseError(i, str(exc)) from exc
        errors = []
    else:
        records, errors = load_dataset(path, label_type=label_type)
    for err in errors:
        _warn_json(str(err), type(err))
    if coords:
        records = attach_coords(records, load_coords(coords))
    if not records:
        raise EmptyDataset(f"no usable reactions in {path}")
    return records


def _model_config(run_cfg: dict, **extra) -> ModelConfig:
    profile = run_cfg.get("profile", "desk")
    return ModelConfig.profile(profile, **{**run_cfg.get("model", {}), **extra})


def _train_config(run_cfg: dict, task: str, defaults: TrainConfig) -> TrainConfig:
    merged = {**defaults.to_dict(), **run_cfg.get("train", {})}
    merged["task"] = task
    return TrainConfig.from_dict(merged)


def _transfer(src: ShingleTransformer, dst: ShingleTransformer) -> list[str]:
    """Copy every same-named, same-shaped tensor except the task heads."""
    copied = []
    for name, t in dst.params.items():
        if name.startswith(("head.", "pretrain")):
            continue
        s = src.params.get(name)
        if s is not None and s.shape == t.shape:
            t.data = s.data.astype(t.dtype).copy()
            copied.append(name)
    return copied


# ----------------------------------------------------------------------------
# commands


def cmd_canon(args):
    text = args.smiles.strip()
    if ">" in text:
        reactants, products = parse_reaction_smiles(text)
        side = lambda mols: ".".join(sorted(canonical_smiles(m) for m in mols))
        print(f"{side(reactants)}>>{side(products)}")
    else:
        print(canonicalize(text))


def cmd_shingles(args):
    rxn = Reaction.from_smiles(args.rxn)
    shingles = reaction_shingles(rxn, args.radius, args.mode)
    for s in shingles:
        print(s.key)


def cmd_drfp(args):
    records = _read_reaction_file(args.inp)
    rows = [(r.id, drfp(r.reaction, args.radius, args.bits).to_hex()) for r in records]
    _write_csv(args.out, ["id", "fingerprint"], rows)


def _read_fingerprints(path) -> tuple[list[str], np.ndarray]:
    ids, bits = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "fingerprint" not in reader.fieldnames:
            raise MissingColumn(f"{path} lacks a 'fingerprint' column")
        for i, row in enumerate(reader, start=2):
            try:
                bits.append(BitFingerprint.from_hex(row["fingerprint"]).bits)
            except ValueError as exc:
                raise ParseError(i, f"bad hex fingerprint: {exc}") from exc
            ids.append(row.get("id") or f"row{i}")
    if not bits:
        raise EmptyDataset(f"no fingerprints in {path}")
    if len({len(b) for b in bits}) != 1:
        raise ParseError(0, "fingerprints have different lengths")
    return ids, np.stack(bits).astype(np.float64)


def cmd_cluster(args):
    ids, x = _read_fingerprints(args.inp)
    ks = [int(k) for k in str(args.k).split(",")]
    cols, summary = [], {}
    for i, k in enumerate(ks):
        res = kmeans(x, k, seed=args.seed + i)
        cols.append(res.assignments)
        summary[str(k)] = {"inertia": res.inertia, "n_iter": res.n_iter,
                           "inertia_history": res.history}
    header = ["id"] + (["cluster"] if len(ks) == 1 else [f"cluster_{k}" for k in ks])
    _write_csv(args.out, header, [[rid, *map(int, row)] for rid, row in zip(ids, np.stack(cols, 1))])
    print(canonical_json({"k": ks, "seed": args.seed, "n": len(ids), "runs": summary}))


def cmd_pretrain(args):
    run_cfg = read_json(args.config) if args.config else {}
    records = _read_reaction_file(args.data, coords=args.coords)
    pre = run_cfg.get("pretrain", {})
    ks = tuple(pre.get("ks", (100, 1000, 4000)))
    labels = pseudo_labels([r.reaction for r in records], ks, pre.get("seed", 0),
                           pre.get("radius", 3), pre.get("bits", 1024))
    model = ShingleTransformer(_model_config(run_cfg, pretrain_classes=ks))
    tcfg = _train_config(run_cfg, "pretrain", TrainConfig())
    feats = [model.featurize(r.reaction) for r in records]
    losses = pretrain(model, feats, labels, tcfg)
    meta = {"version": version_string(), "pretrain_losses": losses, "train": tcfg.to_dict()}
    model.save(args.out, meta)
    print(canonical_json({"losses": losses, "out": str(args.out)}))


def cmd_train(args):
    run_cfg = read_json(args.config) if args.config else {}
    task = run_cfg.get("model", {}).get("task", "regression")
    label_type = "int" if task == "classification" else "float"
    records = _read_reaction_file(args.data, label_type, coords=args.coords)
    if any(r.label is None for r in records):
        raise ParseError(0, "every training row needs a label")
    split_cfg = run_cfg.get("split", {})
    if args.split == "pivot":
        if not args.pivot_file:
            raise UsageError("--split pivot requires --pivot-file")
        pivots = [ln.strip() for ln in Path(args.pivot_file).read_text().splitlines() if ln.strip()]
        split = split_by_pivot(records, pivots)
    else:
        split = split_random(records, split_cfg.get("test_fraction", 0.3), split_cfg.get("seed", 0))
    extra = {}
    if task == "classification" and "n_outputs" not in run_cfg.get("model", {}):
        extra["n_outputs"] = int(max(r.label for r in records)) + 1
    copied = []
    if args.init:
        init = ShingleTransformer.load(args.init)
        base = {k: v for k, v in init.config.to_dict().items() if k != "pretrain_classes"}
        cfg = ModelConfig.from_dict({**base, **run_cfg.get("model", {}), **extra,
                                     "pretrain_classes": []})
        model = ShingleTransformer(cfg)
        copied = _transfer(init, model)
    else:
        model = ShingleTransformer(_model_config(run_cfg, **extra))
    tcfg = _train_config(run_cfg, task, TrainConfig.finetune_defaults())
    best, report = finetune(model, split, tcfg)
    best.save(args.out, {"version": version_string(), "best_epoch": report.best_epoch})
    out = report.to_dict()
    out.update({
        "version": version_string(),
        "resolved_config": {"model": best.config.to_dict(), "train": tcfg.to_dict(),
                            "split": {"kind": split.kind, "n_train": len(split.train),
                                      "n_test": len(split.test), **split_cfg}},
        "init": {"checkpoint": args.init, "tensors_copied": len(copied)} if args.init else None,
    })
    write_json(args.report, out)
    print(canonical_json({"best_epoch": report.best_epoch, "best_metrics": report.best_metrics}))


def cmd_predict(args):
    model = ShingleTransformer.load(args.model)
    label_type = "int" if model.config.task == "classification" else "float"
    records = _read_reaction_file(args.data, label_type, coords=args.coords)
    preds = model.predict([r.reaction for r in records])
    rows = [(r.id, repr(float(p)) if model.config.task == "regression" else int(p))
            for r, p in zip(records, preds)]
    _write_csv(args.out, ["id", "prediction"], rows)


def cmd_permtest(args):
    records = _read_reaction_file(args.data, coords=args.coords)
    reactions = [r.reaction for r in records]
    if args.model == "reference":
        predict = OrderSensitivePredictor().predict
        cfg = {"predictor": "order-sensitive reference"}
    else:
        model = ShingleTransformer.load(args.model)
        predict = model.predict
        cfg = {"predictor": str(args.model), "model": model.config.to_dict()}
    report = permutation_test(predict, reactions, args.n, args.seed)
    out = report.to_dict()
    out.update({"version": version_string(), "seed": args.seed, "config": cfg})
    write_json(args.report, out)
    print(canonical_json({"max_std": report.max_std, "n_reactions": len(reactions)}))


# ----------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rxnshingle", description="Reaction shingles, DRFP and set-transformer models.")
    p.add_argument("--version", action="version", version=f"rxnshingle {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("canon", help="canonical SMILES of a molecule (or reaction)")
    s.add_argument("smiles")
    s.set_defaults(func=cmd_canon)

    s = sub.add_parser("shingles", help="shingle keys of a reaction, in canonical order")
    s.add_argument("--rxn", required=True)
    s.add_argument("--radius", type=int, default=3)
    s.add_argument("--mode", choices=MODES, default="symdiff")
    s.set_defaults(func=cmd_shingles)

    s = sub.add_parser("drfp", help="hex DRFP per dataset row")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--bits", type=int, default=1024)
    s.add_argument("--radius", type=int, default=3)
    s.set_defaults(func=cmd_drfp)

    s = sub.add_parser("cluster", help="k-means over a fingerprint file")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--k", required=True, help="cluster count, or comma-separated counts")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("pretrain", help="pseudo-reaction-type pre-training")
    s.add_argument("--data", required=True)
    s.add_argument("--coords")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("train", help="fine-tune on labeled reactions")
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=("random", "pivot"), default="random")
    s.add_argument("--pivot-file")
    s.add_argument("--coords")
    s.add_argument("--config")
    s.add_argument("--init")
    s.add_argument("--out", required=True)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="predict with a checkpoint")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--coords")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("permtest", help="prediction spread under molecule/atom permutations")
    s.add_argument("--model", required=True, help="checkpoint path, or 'reference'")
    s.add_argument("--data", required=True)
    s.add_argument("--coords")
    s.add_argument("--n", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_permtest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    command = None
    try:
        args = parser.parse_args(argv)
        command = args.command
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        with warnings.catch_warnings():
            warnings.showwarning = _warn_json
            warnings.simplefilter("always")
            args.func(args)
        return 0
    except UsageError as exc:
        _emit_error(exc, command)
        return 2
    except (RxnShingleError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        _emit_error(exc, command)
        return 1


if __name__ == "__main__":
    sys.exit(main())
