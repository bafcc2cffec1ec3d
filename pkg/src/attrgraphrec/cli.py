"""Command-line pipeline: prepare splits and graphs, train, evaluate,
ablate, and sweep cold-start ratios.

Configuration lives in an INI file (sections [data], [split], [train],
[output]); every flag overrides its file counterpart.  Each command
writes the fully resolved configuration next to its outputs, and rerunning
from that emitted file reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .data import (
    DataError,
    load_attribute_table,
    load_ratings,
    load_split,
    save_split,
    split_cold_start,
    split_warm,
)
from .graph import load_graph, save_graph
from .model import load_checkpoint, save_checkpoint
from .train import (
    Metrics,
    REPO_CHOSEN_DEFAULTS,
    TrainConfig,
    TrainError,
    build_pipeline,
    evaluate,
    run_ablation,
    train,
)

__all__ = ["RunConfig", "main"]


@dataclass
class RunConfig:
    """TrainConfig plus file locations and split protocol."""

    ratings: str = ""
    user_attrs: str = ""
    item_attrs: str = ""
    user_schema: str = ""
    item_schema: str = ""
    delimiter: str = "\t"
    mode: str = "warm"
    fraction: float = 0.2
    out: str = "runs/out"
    batch_size: int = 128
    dim: int = 30
    latent_dim: int = 0
    lr: float = 0.0005
    slope: float = 0.01
    pool_percent: float = 5.0
    neighbors: int = 10
    epochs: int = 200
    seed: int = 0
    ablation: str = "none"
    patience: int = 10
    val_fraction: float = 0.1

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            dim=self.dim,
            latent_dim=self.latent_dim,
            lr=self.lr,
            slope=self.slope,
            pool_percent=self.pool_percent,
            neighbors=self.neighbors,
            epochs=self.epochs,
            seed=self.seed,
            disable_evae=self.ablation == "no-evae",
            mean_aggregation=self.ablation == "mean-agg",
            patience=self.patience,
            val_fraction=self.val_fraction,
        )


_SECTIONS = {
    "data": ("ratings", "user_attrs", "item_attrs", "user_schema", "item_schema", "delimiter"),
    "split": ("mode", "fraction", "seed"),
    "train": ("batch_size", "dim", "latent_dim", "lr", "slope", "pool_percent",
              "neighbors", "epochs", "ablation", "patience", "val_fraction"),
    "output": ("out",),
}


def read_config_file(path) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    with open(path, "r", encoding="utf-8") as fh:
        cp.read_file(fh)
    values: dict = {}
    for section, keys in _SECTIONS.items():
        if not cp.has_section(section):
            continue
        for key in keys:
            if cp.has_option(section, key):
                values[key] = cp.get(section, key)
    return values


def write_config_file(cfg: RunConfig, path) -> None:
    """Emit the resolved config; repo-choice defaults are marked as such."""
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(cfg, key)
            mark = "  ; repo default" if key in REPO_CHOSEN_DEFAULTS else ""
            lines.append(f"{key} = {value}{mark}")
        lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """File values first, then CLI flags override."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        casts = {f.name: f.type for f in fields(RunConfig)}
        for key, raw in file_values.items():
            typ = casts[key]
            if typ in ("int", int):
                value = int(raw)
            elif typ in ("float", float):
                value = float(raw)
            else:
                value = raw
            cfg = replace(cfg, **{key: value})
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            cfg = replace(cfg, **{f.name: flag})
    return cfg


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--ratings")
    p.add_argument("--user-attrs", dest="user_attrs")
    p.add_argument("--item-attrs", dest="item_attrs")
    p.add_argument("--user-schema", dest="user_schema")
    p.add_argument("--item-schema", dest="item_schema")
    p.add_argument("--delimiter")
    p.add_argument("--mode", choices=["warm", "item-cold", "user-cold"])
    p.add_argument("--fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--slope", type=float)
    p.add_argument("--pool-percent", dest="pool_percent", type=float)
    p.add_argument("--neighbors", type=int)
    p.add_argument("--ablation", choices=["none", "no-evae", "mean-agg"])
    p.add_argument("--patience", type=int)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)


def _load_inputs(cfg: RunConfig):
    ratings = load_ratings(cfg.ratings, delimiter=cfg.delimiter)
    with open(cfg.user_schema, "r", encoding="utf-8") as fh:
        user_schema_cfg = json.load(fh)
    with open(cfg.item_schema, "r", encoding="utf-8") as fh:
        item_schema_cfg = json.load(fh)
    user_enc, _ = load_attribute_table(cfg.user_attrs, user_schema_cfg,
                                       ratings.user_index(), ratings.num_users)
    item_enc, _ = load_attribute_table(cfg.item_attrs, item_schema_cfg,
                                       ratings.item_index(), ratings.num_items)
    return ratings, user_enc, item_enc


def _make_split(ratings, cfg: RunConfig):
    if cfg.mode == "warm":
        if not (0.0 < cfg.fraction < 1.0):
            raise DataError(f"warm split needs fraction in (0,1), got {cfg.fraction}")
        return split_warm(ratings, cfg.fraction, cfg.seed)
    if cfg.fraction <= 0.0:
        raise DataError("cold split with fraction 0 would have an empty test set")
    return split_cold_start(ratings, cfg.fraction, cfg.mode, cfg.seed)


def _stats_line(ratings) -> str:
    return (f"{ratings.num_users} users, {ratings.num_items} items, "
            f"{len(ratings.triples)} ratings, sparsity {ratings.sparsity:.2%}")


def _prepared_paths(out):
    return {
        "config": os.path.join(out, "config.ini"),
        "split": os.path.join(out, "split.json"),
        "user_graph": os.path.join(out, "user_graph.json"),
        "item_graph": os.path.join(out, "item_graph.json"),
    }


def cmd_prepare(cfg: RunConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    ratings, user_enc, item_enc = _load_inputs(cfg)
    print(_stats_line(ratings))
    split = _make_split(ratings, cfg)
    pipe = build_pipeline(ratings.num_users, ratings.num_items, split,
                          user_enc.rows, item_enc.rows, cfg.pool_percent,
                          descriptor=f"{cfg.mode}/{cfg.fraction}")
    paths = _prepared_paths(cfg.out)
    save_split(split, paths["split"])
    save_graph(pipe.user_graph, paths["user_graph"])
    save_graph(pipe.item_graph, paths["item_graph"])
    write_config_file(cfg, paths["config"])
    print(f"split: {len(split.train)} train / {len(split.test)} test triples, "
          f"{len(split.cold_ids)} cold nodes -> {paths['split']}")
    return 0


def _rebuild_pipeline(cfg: RunConfig):
    """Load prepared artifacts; graphs come from disk, so training sees
    exactly what prepare wrote."""
    ratings, user_enc, item_enc = _load_inputs(cfg)
    paths = _prepared_paths(cfg.out)
    split = load_split(paths["split"])
    graphs = (load_graph(paths["user_graph"]), load_graph(paths["item_graph"]))
    pipe = build_pipeline(ratings.num_users, ratings.num_items, split,
                          user_enc.rows, item_enc.rows, cfg.pool_percent,
                          descriptor=f"{split.mode}/{split.fraction}", graphs=graphs)
    return ratings, pipe


def _write_trace(trace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_rmse", "val_mae"])
        for row in trace:
            w.writerow([row["epoch"], repr(row["train_loss"]),
                        repr(row["val_rmse"]) if row["val_rmse"] != "" else "",
                        repr(row["val_mae"]) if row["val_mae"] != "" else ""])


def _write_metrics(metrics: Metrics, path, extra: dict | None = None):
    doc = {"rmse": metrics.rmse, "mae": metrics.mae, "count": metrics.count,
           "descriptor": metrics.descriptor}
    doc.update(extra or {})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def cmd_train(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    _, pipe = _rebuild_pipeline(cfg)
    result = train(pipe, cfg.train_config())
    metrics = evaluate(result.store, pipe.split.test, pipe, cfg.train_config())
    ckpt = os.path.join(cfg.out, "checkpoint.npz")
    save_checkpoint(result.store, ckpt, extra={"best_epoch": result.best_epoch,
                                               "descriptor": result.descriptor})
    _write_trace(result.trace, os.path.join(cfg.out, "trace.csv"))
    _write_metrics(metrics, os.path.join(cfg.out, "metrics.json"),
                   extra={"best_epoch": result.best_epoch})
    write_config_file(cfg, os.path.join(cfg.out, "config.ini"))
    print(f"trained {len(result.trace)} epochs in {time.perf_counter() - t0:.1f}s; "
          f"test rmse={metrics.rmse:.4f} mae={metrics.mae:.4f} -> {ckpt}")
    return 0


def cmd_eval(cfg: RunConfig, checkpoint: str, tag: str = "eval") -> int:
    _, pipe = _rebuild_pipeline(cfg)
    store, _ = load_checkpoint(checkpoint)
    expect = (pipe.num_users, pipe.num_items,
              pipe.user_attr_rows.shape[1], pipe.item_attr_rows.shape[1])
    got = (store.config.num_users, store.config.num_items,
           store.config.user_attr_width, store.config.item_attr_width)
    if expect != got:
        print(f"checkpoint/config mismatch: data wants {expect}, checkpoint has {got}",
              file=sys.stderr)
        return 2
    metrics = evaluate(store, pipe.split.test, pipe, cfg.train_config())
    out_path = os.path.join(cfg.out, f"metrics_{tag}.json")
    _write_metrics(metrics, out_path)
    print(f"{pipe.descriptor}: rmse={metrics.rmse:.4f} mae={metrics.mae:.4f} "
          f"({metrics.count} pairs) -> {out_path}")
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    if cfg.ablation == "none":
        print("ablate needs --ablation no-evae or mean-agg", file=sys.stderr)
        return 2
    _, pipe = _rebuild_pipeline(cfg)
    base = replace(cfg.train_config(), disable_evae=False, mean_aggregation=False)
    (_, m_full), (_, m_ablated) = run_ablation(pipe, base, cfg.ablation)
    _write_metrics(m_full, os.path.join(cfg.out, "metrics_full.json"))
    _write_metrics(m_ablated, os.path.join(cfg.out, f"metrics_{cfg.ablation}.json"))
    write_config_file(cfg, os.path.join(cfg.out, "config.ini"))
    print(f"full     rmse={m_full.rmse:.4f} mae={m_full.mae:.4f}")
    print(f"{cfg.ablation:8s} rmse={m_ablated.rmse:.4f} mae={m_ablated.mae:.4f}")
    return 0


def cmd_sweep(cfg: RunConfig, fractions) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    ratings, user_enc, item_enc = _load_inputs(cfg)
    rows = []
    for frac in fractions:
        sub = replace(cfg, fraction=frac)
        split = _make_split(ratings, sub)
        pipe = build_pipeline(ratings.num_users, ratings.num_items, split,
                              user_enc.rows, item_enc.rows, cfg.pool_percent,
                              descriptor=f"{cfg.mode}/{frac}")
        result = train(pipe, sub.train_config())
        metrics = evaluate(result.store, split.test, pipe, sub.train_config())
        rows.append({"fraction": frac, "rmse": metrics.rmse, "mae": metrics.mae,
                     "count": metrics.count})
        print(f"fraction {frac}: rmse={metrics.rmse:.4f} mae={metrics.mae:.4f}")
    sweep_path = os.path.join(cfg.out, "sweep.csv")
    with open(sweep_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fraction", "rmse", "mae", "count"])
        for row in rows:
            w.writerow([row["fraction"], repr(row["rmse"]), repr(row["mae"]), row["count"]])
    write_config_file(cfg, os.path.join(cfg.out, "config.ini"))
    print(f"sweep -> {sweep_path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="attrgraphrec",
        description="attribute-graph recommender: prepare, train, evaluate",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("prepare", "train", "eval", "ablate", "sweep"):
        p = subs.add_parser(name)
        _add_common_flags(p)
        if name == "eval":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--tag", default="eval")
        if name == "sweep":
            p.add_argument("--fractions", default="0.1,0.3,0.5",
                           help="comma-separated cold fractions")
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.checkpoint, args.tag)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        if args.command == "sweep":
            fractions = [float(x) for x in args.fractions.split(",") if x]
            return cmd_sweep(cfg, fractions)
    except (DataError, TrainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
