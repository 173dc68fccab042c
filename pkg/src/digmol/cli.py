"""Command-line entry point: ``digmol <command> ...`` or ``python -m digmol``.

Exit status is 0 on success, 2 on a usage error and 1 on a runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as dio
from .augment import AugmentConfig, deleted_edges, make_pair, masked_rows
from .graph import transitions
from .metrics import evaluate, random_split, scaffold_split
from .smiles import extract_scaffold, parse_smiles
from .trainer import Checkpoint, FinetunedModel, finetune, predict, pretrain
from .momentum import init_pair

log = logging.getLogger("digmol")


def _default_seed() -> int:
    return int(os.environ.get("DIGMOL_SEED", "0"))


def _csv_block(name: str, m: np.ndarray, out) -> None:
    print(f"# {name}", file=out)
    for row in np.atleast_2d(m):
        print(",".join(repr(float(v)) if not float(v).is_integer() else str(int(v)) for v in row), file=out)


def _fractions(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated fractions")
    return tuple(parts)


def _run_config(args) -> dio.RunConfig:
    cfg = dio.RunConfig()
    if getattr(args, "config", None):
        cfg = dio.RunConfig.from_text(Path(args.config).read_text())
    overrides = {
        "epochs": args.epochs,
        "batch_size": args.batch,
        "lr": args.lr,
        "seed": args.seed,
    }
    for key in ("temperature", "momentum", "mask_ratio", "unidir_ratio", "num_layer", "emb_dim", "mode", "dropout"):
        overrides[key] = getattr(args, key, None)
    cfg = cfg.override(**overrides)
    if args.seed is None and not getattr(args, "config", None):
        cfg = cfg.override(seed=_default_seed())
    return cfg


def _load(args, task=None) -> dio.Dataset:
    labels = tuple(args.labels.split(",")) if getattr(args, "labels", None) else None
    ds = dio.load_dataset(dio.DatasetFile(args.data, args.smiles_column, labels, task or "classification"))
    for row, reason in ds.failures:
        print(f"warning: row {row} skipped: {reason}", file=sys.stderr)
    return ds


def _split(ds, method, fractions, seed):
    fn = scaffold_split if method == "scaffold" else random_split
    return fn(ds.graphs, fractions, seed)


# --- commands --------------------------------------------------------------------


def cmd_parse(args, out) -> int:
    g = parse_smiles(args.smiles)
    print(f"nodes: {g.n_nodes}", file=out)
    print(f"directed_edges: {g.n_directed_edges}", file=out)
    print(f"bonds: {len(g.bonds)}", file=out)
    scaffold = extract_scaffold(g).canonical_string
    print(f"scaffold: {scaffold or '(none)'}", file=out)
    _csv_block("X", g.x, out)
    if args.matrices:
        pf, pb = transitions(g)
        _csv_block("A", g.adj, out)
        _csv_block("P_f", pf, out)
        _csv_block("P_b", pb, out)
    return 0


def cmd_augment(args, out) -> int:
    g = parse_smiles(args.smiles)
    cfg = AugmentConfig(args.mask, args.unidir, args.seed if args.seed is not None else _default_seed())
    for i, view in enumerate(make_pair(g, cfg), 1):
        print(f"view {i}", file=out)
        print("masked_rows: " + ",".join(map(str, masked_rows(view))), file=out)
        print("deleted_edges: " + ",".join(f"{a}->{b}" for a, b in deleted_edges(g, view)), file=out)
        _csv_block(f"A{i}", view.adj, out)
    return 0


def cmd_split(args, out) -> int:
    ds = _load(args)
    seed = args.seed if args.seed is not None else _default_seed()
    parts = _split(ds, args.method, args.fractions, seed)
    lines = ["index,row,smiles,split"]
    for name, idx in zip(("train", "valid", "test"), parts):
        lines += [f"{i},{ds.rows[i]},{ds.smiles[i]},{name}" for i in idx]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    for name, idx in zip(("train", "valid", "test"), parts):
        print(f"{name}: {len(idx)}", file=out)
    if not args.out:
        out.write(text)
    return 0


def cmd_pretrain(args, out) -> int:
    cfg = _run_config(args)
    ds = _load(args)
    result = pretrain(ds.graphs, cfg.pretrain_config(), metrics_path=args.metrics)
    result.checkpoint.save(args.out)
    first, last = result.history[0][1], result.history[-1][1]
    print(f"pretrained {len(ds)} molecules for {cfg.epochs} epochs: L_joint {first:.4f} -> {last:.4f}", file=out)
    print(f"checkpoint: {args.out}", file=out)
    return 0


def cmd_finetune(args, out) -> int:
    cfg = _run_config(args)
    ds = _load(args, args.task)
    if args.checkpoint == "none":
        source = init_pair(cfg.seed, cfg.encoder_config(), cfg.momentum).online
        mode = cfg.mode
    else:
        source = Checkpoint.load(args.checkpoint)
        mode = source.config.mode
    train, valid, test = _split(ds, args.split, args.fractions, cfg.seed)
    model = finetune(
        source, ds.graphs, ds.labels, args.task, cfg.finetune_config(),
        train_idx=train, valid_idx=valid or None, mode=mode, task_names=ds.task_names,
    )
    model.save(args.out)
    metric = args.metric or ("roc_auc" if args.task == "classification" else "rmse")
    pred = predict(model, ds.graphs)
    for name, idx in (("train", train), ("valid", valid), ("test", test)):
        if idx:
            report = evaluate(pred[idx], ds.labels[idx], metric, ds.task_names)
            avg = report.macro_average
            print(f"{name} {metric}: {'absent' if avg is None else f'{avg:.4f}'}", file=out)
    print(f"model: {args.out} (best epoch {model.best_epoch})", file=out)
    return 0


def cmd_eval(args, out) -> int:
    model = FinetunedModel.load(args.model)
    ds = _load(args, model.task)
    if ds.labels.shape[1] != len(model.task_names):
        raise ValueError(f"dataset has {ds.labels.shape[1]} label columns, model predicts {len(model.task_names)}")
    metric = args.metric or ("roc_auc" if model.task == "classification" else "rmse")
    idx = list(range(len(ds)))
    if args.subset != "all":
        parts = dict(zip(("train", "valid", "test"), _split(ds, args.split, args.fractions, args.seed if args.seed is not None else _default_seed())))
        idx = parts[args.subset]
    pred = predict(model, [ds.graphs[i] for i in idx])
    report = evaluate(pred, ds.labels[idx], metric, model.task_names)
    print(report.format(), file=out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_embed(args, out) -> int:
    ds = _load(args)
    source = Checkpoint.load(args.checkpoint)
    table = dio.export_embeddings(source, ds.graphs, args.out, ids=ds.rows)
    print(f"wrote {table.shape[0]} embeddings of width {table.shape[1] - 2} to {args.out}", file=out)
    return 0


# --- argument parsing -------------------------------------------------------------------


def _data_args(p):
    p.add_argument("data", help="dataset CSV with a header row")
    p.add_argument("--smiles-column", default="smiles")
    p.add_argument("--labels", help="comma-separated label columns (default: all but smiles)")


def _knob_args(p):
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int, help="mini-batch size")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, help="default: $DIGMOL_SEED or 0")
    p.add_argument("--temperature", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--mask-ratio", dest="mask_ratio", type=float)
    p.add_argument("--unidir-ratio", dest="unidir_ratio", type=float)
    p.add_argument("--num-layer", dest="num_layer", type=int)
    p.add_argument("--emb-dim", dest="emb_dim", type=int)
    p.add_argument("--mode", choices=("diffusion", "gcn"))
    p.add_argument("--dropout", type=float)


def _split_args(p, default="scaffold"):
    p.add_argument("--split", choices=("scaffold", "random"), default=default)
    p.add_argument("--fractions", type=_fractions, default=(0.8, 0.1, 0.1))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="digmol", description="Dual-interaction contrastive molecular graph learning.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a SMILES string and print its graph")
    p.add_argument("smiles")
    p.add_argument("--matrices", action="store_true", help="also print A, P_f and P_b")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("augment", help="print two augmented views of a molecule")
    p.add_argument("smiles")
    p.add_argument("--mask", type=float, default=0.25)
    p.add_argument("--unidir", type=float, default=0.25)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("split", help="scaffold or random train/valid/test split")
    _data_args(p)
    p.add_argument("--method", choices=("scaffold", "random"), default="scaffold")
    p.add_argument("--fractions", type=_fractions, default=(0.8, 0.1, 0.1))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="write the assignment CSV here instead of stdout")
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("pretrain", help="contrastive pretraining")
    _data_args(p)
    _knob_args(p)
    p.add_argument("--out", default="pretrain.digm", help="checkpoint path")
    p.add_argument("--metrics", default=None, help="per-epoch loss CSV path")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="train a prediction head on a frozen encoder")
    p.add_argument("checkpoint", help="pretraining checkpoint, or 'none' for a random encoder")
    _data_args(p)
    _knob_args(p)
    _split_args(p)
    p.add_argument("--task", choices=("classification", "regression"), default="classification")
    p.add_argument("--metric", choices=("roc_auc", "prc_auc", "rmse", "mae"))
    p.add_argument("--out", default="model.digm")
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a fine-tuned model on a dataset")
    p.add_argument("model")
    _data_args(p)
    _split_args(p)
    p.add_argument("--subset", choices=("all", "train", "valid", "test"), default="all")
    p.add_argument("--seed", type=int)
    p.add_argument("--metric", choices=("roc_auc", "prc_auc", "rmse", "mae"))
    p.add_argument("--csv", help="also write the report as CSV")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("embed", help="export graph embeddings and a 2-D PCA projection")
    p.add_argument("checkpoint")
    _data_args(p)
    p.add_argument("--out", default="embeddings.csv")
    p.set_defaults(fn=cmd_embed)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args, out)
    except (OSError, ValueError, ArithmeticError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
