"""Command-line entry point.

Subcommands: synth, train, eval, ablate, scale, gridsearch.  Every run
writes a manifest.json listing its inputs (with recomputable hashes),
seeds, and output files.  Exit codes: 0 success, 1 usage or config
error, 2 runtime or numerical failure.

Config files are TOML (JSON accepted as a fallback) whose keys mirror
the TrainConfig fields; the per-phase names lr_p1, dropout_p1, gamma,
lr_p2, dropout_p2 plus seed are required in explicit config files.  The
BETAGRAPH_OUT_ROOT environment variable, when set, anchors relative
output directories.
"""

from __future__ import annotations

import argparse
import datetime
import itertools
import json
import os
import sys
import time
from dataclasses import asdict, fields, replace

from . import __version__, evaluation, graphs
from .ioutil import atomic_write_text, sha256_dir, sha256_file
from .training import (TrainConfig, TrainingDivergence, train_alternating,
                       load_checkpoint, save_checkpoint, variant_config)

REQUIRED_CONFIG_KEYS = ("lr_p1", "dropout_p1", "gamma", "lr_p2",
                        "dropout_p2", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _out_dir(path):
    root = os.environ.get("BETAGRAPH_OUT_ROOT")
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    os.makedirs(path, exist_ok=True)
    return path


def _load_config_file(path) -> dict:
    with open(path, "rb") as fh:
        payload = fh.read()
    if path.endswith(".json"):
        raw = json.loads(payload.decode("utf-8"))
    else:
        try:
            try:
                import tomllib as toml
            except ImportError:
                import tomli as toml
            raw = toml.loads(payload.decode("utf-8"))
        except Exception as exc:
            try:
                raw = json.loads(payload.decode("utf-8"))
            except json.JSONDecodeError:
                raise UsageError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a table of fields")
    known = {f.name for f in fields(TrainConfig)}
    for key in raw:
        if key not in known:
            raise UsageError(f"unknown config field '{key}' in {path}")
    for key in REQUIRED_CONFIG_KEYS:
        if key not in raw:
            raise UsageError(f"config {path} is missing required field '{key}'")
    return raw


def _build_config(args, graph=None) -> TrainConfig:
    raw = {}
    if getattr(args, "config", None):
        raw.update(_load_config_file(args.config))
    for name in ("seed", "rounds", "epochs_p1", "epochs_p2", "gamma",
                 "lr_p1", "lr_p2", "dropout_p1", "dropout_p2", "hidden_dim",
                 "embed_dim", "reasoning_dim", "dtype"):
        v = getattr(args, name, None)
        if v is not None:
            raw[name] = v
    if getattr(args, "ood_classes", None) is not None:
        raw["ood_classes"] = tuple(args.ood_classes)
    if "ood_classes" in raw:
        raw["ood_classes"] = tuple(raw["ood_classes"])
    elif graph is not None and graph.class_count >= 4:
        # default leave-out: the two highest class ids
        raw["ood_classes"] = (graph.class_count - 2, graph.class_count - 1)
    if "split_ratios" in raw:
        raw["split_ratios"] = tuple(raw["split_ratios"])
    try:
        return TrainConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _write_manifest(out_dir, command, outputs, *, config_path=None,
                    config=None, dataset=None, seeds=(), started=None):
    manifest = {
        "command": command,
        "artifact_version": __version__,
        "out_dir": os.path.abspath(out_dir),
        "seeds": list(seeds),
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    if config_path:
        manifest["config_path"] = os.path.abspath(config_path)
        manifest["config_hash"] = sha256_file(config_path)
    if config is not None:
        manifest["config"] = asdict(config)
    if dataset:
        manifest["dataset"] = os.path.abspath(dataset)
        manifest["dataset_hash"] = sha256_dir(dataset)
    path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(path, json.dumps(manifest, indent=1) + "\n")
    return path


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(str(c) for c in row) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


# -- synth -------------------------------------------------------------

def cmd_synth(args):
    started = _now()
    out = _out_dir(args.out)
    if args.kind == "er":
        if not 0.0 <= args.density < 1.0:
            raise UsageError("density must lie in [0, 1)")
        g = graphs.gen_erdos_renyi(args.nodes, args.density, args.feature_dim,
                                   seed=args.seed, class_count=args.classes)
    else:
        if not args.p_in > args.p_out:
            raise UsageError("p-in must exceed p-out")
        g = graphs.gen_planted_partition(
            args.blocks, args.nodes_per_block, args.p_in, args.p_out,
            args.feature_dim, args.separation, seed=args.seed)
    graphs.save_dataset(g, out, feature_format=args.feature_format)
    outputs = [os.path.join(out, f) for f in
               ("edges.tsv", "labels.csv", "meta.json",
                "features.bin" if args.feature_format == "bin" else "features.csv")]
    _write_manifest(out, "synth", outputs, seeds=[args.seed], started=started)
    print(f"wrote {g.name}: n={g.n} edges={g.edge_count} -> {out}")
    return 0


# -- train -------------------------------------------------------------

def _history_csv(path, history):
    header = ["round", "bl_loss", "dl_loss", "val_acc", "val_aurc",
              "val_auroc", "selection_score"]
    rows = [[_fmt(h[k]) for k in header] for h in history]
    _csv(path, header, rows)


def cmd_train(args):
    started = _now()
    graph = graphs.load_dataset(args.dataset)
    config = _build_config(args, graph)
    if config.normalize_features:
        graph = graphs.zscore_features(graph)
    out = _out_dir(args.out)
    split = graphs.make_split(graph, config.ood_classes,
                              ratios=config.split_ratios,
                              ood_val_fraction=config.ood_val_fraction,
                              seed=config.seed)
    atomic_write_text(os.path.join(out, "split.json"), split.to_json() + "\n")
    history = []
    try:
        state, history = train_alternating(graph, split, config)
    except TrainingDivergence as exc:
        _history_csv(os.path.join(out, "history.csv"), history)
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    ckpt = os.path.join(out, "checkpoint.npz")
    save_checkpoint(ckpt, state, extra_meta={
        "dataset": os.path.abspath(args.dataset),
        "dataset_name": graph.name,
        "id_classes": list(split.id_classes),
    })
    _history_csv(os.path.join(out, "history.csv"), history)
    _write_manifest(
        out, "train",
        [ckpt, os.path.join(out, "history.csv"), os.path.join(out, "split.json")],
        config_path=args.config, config=config, dataset=args.dataset,
        seeds=[config.seed], started=started)
    best = max(h["selection_score"] for h in history)
    print(f"trained {config.rounds} round(s); best selection score {best:.4f}"
          f" -> {ckpt}")
    return 0


# -- eval --------------------------------------------------------------

def cmd_eval(args):
    started = _now()
    out = _out_dir(args.out)
    state, meta = load_checkpoint(args.checkpoint)
    config = state.config
    graph = graphs.load_dataset(args.dataset,
                                normalize_features=config.normalize_features)
    if graph.feature_dim != state.feature_dim:
        raise UsageError(
            f"checkpoint expects {state.feature_dim} features, dataset has "
            f"{graph.feature_dim}")
    if len(config.ood_classes) and graph.class_count <= max(config.ood_classes):
        raise UsageError("checkpoint OOD classes outside dataset class range")
    if graph.class_count - len(config.ood_classes) != state.class_count:
        raise UsageError(
            f"checkpoint was trained for {state.class_count} known classes; "
            f"dataset provides {graph.class_count - len(config.ood_classes)}")

    if args.split:
        with open(args.split) as fh:
            split = graphs.SplitSpec.from_json(fh.read())
    else:
        split = graphs.make_split(graph, config.ood_classes,
                                  ratios=config.split_ratios,
                                  ood_val_fraction=config.ood_val_fraction,
                                  seed=config.seed)

    seeds = args.seeds if args.seeds else [config.seed]
    reports = []
    chk_hash = sha256_file(args.checkpoint)
    for s in seeds:
        if s == config.seed:
            rep = evaluation.evaluate(state, graph, split, seed=s,
                                      config_hash=chk_hash)
        else:
            # fresh protocol run: re-split and retrain under this seed
            sp = graphs.make_split(graph, config.ood_classes,
                                   ratios=config.split_ratios,
                                   ood_val_fraction=config.ood_val_fraction,
                                   seed=s)
            st, _ = train_alternating(graph, sp, replace(config, seed=s))
            rep = evaluation.evaluate(st, graph, sp, seed=s)
        reports.append(rep)
    agg = evaluation.aggregate(reports)

    if args.with_baselines:
        base = evaluation.baseline_report(graph, split, seed=config.seed)
        agg["baselines"] = base

    report_path = os.path.join(out, "report.json")
    atomic_write_text(report_path, json.dumps({
        "per_seed": [r.to_dict() for r in reports],
        "aggregate": agg,
    }, indent=1) + "\n")

    cv = evaluation.curves(state, graph, split)
    coverage, risk = cv["risk_coverage"]
    rc_path = os.path.join(out, "curves_risk_coverage.csv")
    _csv(rc_path, ["coverage", "risk"],
         [[repr(float(a)), repr(float(b))] for a, b in zip(coverage, risk)])
    outputs = [report_path, rc_path]
    if "roc" in cv:
        fpr, tpr = cv["roc"]
        roc_path = os.path.join(out, "curves_roc.csv")
        _csv(roc_path, ["fpr", "tpr"],
             [[repr(float(a)), repr(float(b))] for a, b in zip(fpr, tpr)])
        outputs.append(roc_path)

    header, rows = evaluation.node_scores_table(state, graph, split)
    scores_path = os.path.join(out, "scores.csv")
    _csv(scores_path, header, rows)
    outputs.append(scores_path)

    table_path = os.path.join(out, "aggregate.csv")
    _csv(table_path,
         ["runs", "acc_mean", "acc_std", "aurc_x1000_mean", "aurc_x1000_std",
          "fpr95_mean", "fpr95_std", "auroc_mean", "auroc_std", "aupr_mean",
          "aupr_std"],
         [[_fmt(agg.get(k)) for k in
           ("runs", "acc_mean", "acc_std", "aurc_x1000_mean", "aurc_x1000_std",
            "fpr95_mean", "fpr95_std", "auroc_mean", "auroc_std", "aupr_mean",
            "aupr_std")]])
    outputs.append(table_path)

    _write_manifest(out, "eval", outputs, dataset=args.dataset, seeds=seeds,
                    config=config, started=started)
    print(f"evaluated {len(seeds)} seed(s): acc={agg['acc_mean']:.4f}"
          + (f" auroc={agg['auroc_mean']:.4f}" if agg["auroc_mean"] is not None
             else ""))
    return 0


# -- ablate ------------------------------------------------------------

ABLATION_VARIANTS = ("a", "b", "c", "d", "e", "no_at")


def cmd_ablate(args):
    started = _now()
    for v in args.variants:
        if v not in ABLATION_VARIANTS:
            raise UsageError(f"unknown variant '{v}'"
                             f" (choose from {', '.join(ABLATION_VARIANTS)})")
    graph = graphs.load_dataset(args.dataset)
    base = _build_config(args, graph)
    if base.normalize_features:
        graph = graphs.zscore_features(graph)
    out = _out_dir(args.out)
    split = graphs.make_split(graph, base.ood_classes,
                              ratios=base.split_ratios,
                              ood_val_fraction=base.ood_val_fraction,
                              seed=base.seed)
    rows = []
    for v in args.variants:
        cfg = variant_config(base, v)
        state, _ = train_alternating(graph, split, cfg)
        rep = evaluation.evaluate(state, graph, split)
        rows.append([v, _fmt(rep.acc), _fmt(rep.aurc_x1000), _fmt(rep.fpr95),
                     _fmt(rep.auroc)])
        print(f"variant {v}: acc={rep.acc:.4f} aurc(x1000)={rep.aurc_x1000:.2f}"
              + (f" fpr95={rep.fpr95:.4f} auroc={rep.auroc:.4f}"
                 if rep.auroc is not None else ""))
    table = os.path.join(out, "ablation.csv")
    _csv(table, ["variant", "acc", "aurc_x1000", "fpr95", "auroc"], rows)
    _write_manifest(out, "ablate", [table], config_path=args.config,
                    config=base, dataset=args.dataset, seeds=[base.seed],
                    started=started)
    return 0


# -- scale -------------------------------------------------------------

def cmd_scale(args):
    started = _now()
    out = _out_dir(args.out)
    base = _build_config(args)
    base = replace(base, rounds=1, ood_classes=())
    rows = []
    for n, density in itertools.product(args.nodes, args.densities):
        try:
            g = graphs.gen_erdos_renyi(n, density, args.feature_dim,
                                       seed=base.seed, class_count=args.classes)
            split = graphs.make_split(g, (), ratios=base.split_ratios,
                                      seed=base.seed)
            t0 = time.perf_counter()
            train_alternating(g, split, base)
            elapsed = time.perf_counter() - t0
            rows.append([n, density, g.edge_count, repr(elapsed), "ok"])
            print(f"n={n} density={density}: {elapsed:.2f}s "
                  f"({g.edge_count} edges)")
        except MemoryError:
            rows.append([n, density, "", "", "oom"])
            print(f"n={n} density={density}: out of memory", file=sys.stderr)
    table = os.path.join(out, "timings.csv")
    _csv(table, ["nodes", "density", "edges", "seconds", "status"], rows)
    _write_manifest(out, "scale", [table], seeds=[base.seed], started=started)
    return 0


# -- gridsearch ----------------------------------------------------------

GRID_LR = (0.01, 0.001, 0.0005)
GRID_DROPOUT = (0.2, 0.4, 0.6)
GRID_GAMMA = (15.0, 55.0, 95.0, 135.0)


def cmd_gridsearch(args):
    started = _now()
    graph = graphs.load_dataset(args.dataset)
    base = _build_config(args, graph)
    if base.normalize_features:
        graph = graphs.zscore_features(graph)
    out = _out_dir(args.out)
    split = graphs.make_split(graph, base.ood_classes,
                              ratios=base.split_ratios,
                              ood_val_fraction=base.ood_val_fraction,
                              seed=base.seed)
    lr1 = args.lr_p1_grid or GRID_LR
    lr2 = args.lr_p2_grid or GRID_LR
    dr1 = args.dropout_p1_grid or GRID_DROPOUT
    dr2 = args.dropout_p2_grid or GRID_DROPOUT
    gam = args.gamma_grid or GRID_GAMMA
    rows = []
    for combo in itertools.product(lr1, dr1, gam, lr2, dr2):
        cfg = replace(base, lr_p1=combo[0], dropout_p1=combo[1],
                      gamma=combo[2], lr_p2=combo[3], dropout_p2=combo[4])
        _, history = train_alternating(graph, split, cfg)
        best = max(h["selection_score"] for h in history)
        rows.append(list(combo) + [repr(best)])
        print(f"lr_p1={combo[0]} dropout_p1={combo[1]} gamma={combo[2]} "
              f"lr_p2={combo[3]} dropout_p2={combo[4]}: score {best:.4f}")
    rows.sort(key=lambda r: -float(r[-1]))
    table = os.path.join(out, "gridsearch.csv")
    _csv(table, ["lr_p1", "dropout_p1", "gamma", "lr_p2", "dropout_p2",
                 "selection_score"], rows)
    _write_manifest(out, "gridsearch", [table], config_path=args.config,
                    dataset=args.dataset, seeds=[base.seed], started=started)
    return 0


# -- parser ---------------------------------------------------------------

def _add_config_flags(p, with_file=True):
    if with_file:
        p.add_argument("--config", help="TOML or JSON training config")
    p.add_argument("--seed", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--epochs-p1", dest="epochs_p1", type=int)
    p.add_argument("--epochs-p2", dest="epochs_p2", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lr-p1", dest="lr_p1", type=float)
    p.add_argument("--lr-p2", dest="lr_p2", type=float)
    p.add_argument("--dropout-p1", dest="dropout_p1", type=float)
    p.add_argument("--dropout-p2", dest="dropout_p2", type=float)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--reasoning-dim", dest="reasoning_dim", type=int)
    p.add_argument("--dtype", choices=("float32", "float64"))
    p.add_argument("--ood-classes", dest="ood_classes", type=int, nargs="*")


def build_parser() -> _Parser:
    parser = _Parser(prog="betagraph",
                     description="Open-world graph node classification with "
                                 "Beta-embedding uncertainty scores")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset directory")
    p.add_argument("kind", choices=("er", "ppm"))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--feature-format", choices=("bin", "csv"), default="bin")
    p.add_argument("--nodes", type=int, default=5000, help="er: node count")
    p.add_argument("--density", type=float, default=0.005)
    p.add_argument("--classes", type=int, default=4, help="er: label count")
    p.add_argument("--blocks", type=int, default=6)
    p.add_argument("--nodes-per-block", type=int, default=200)
    p.add_argument("--p-in", type=float, default=0.05)
    p.add_argument("--p-out", type=float, default=0.002)
    p.add_argument("--separation", type=float, default=3.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a dataset directory")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint (multi-seed aware)")
    p.add_argument("dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", help="split JSON; defaults to the checkpoint's")
    p.add_argument("--seeds", type=int, nargs="*",
                   help="protocol seeds; seeds other than the checkpoint's "
                        "retrain from scratch")
    p.add_argument("--with-baselines", action="store_true",
                   help="add MaxLogit/Energy columns from a plain classifier")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare ablation variants")
    p.add_argument("dataset")
    p.add_argument("--variants", nargs="+", default=list(ABLATION_VARIANTS))
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("scale", help="time training rounds on growing graphs")
    p.add_argument("--nodes", type=int, nargs="+", required=True)
    p.add_argument("--densities", type=float, nargs="+", required=True)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("gridsearch", help="enumerate the hyperparameter grids")
    p.add_argument("dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--lr-p1-grid", type=float, nargs="*")
    p.add_argument("--lr-p2-grid", type=float, nargs="*")
    p.add_argument("--dropout-p1-grid", type=float, nargs="*")
    p.add_argument("--dropout-p2-grid", type=float, nargs="*")
    p.add_argument("--gamma-grid", type=float, nargs="*")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gridsearch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (graphs.DatasetError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingDivergence, FloatingPointError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
