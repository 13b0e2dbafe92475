"""Command-line orchestration of the full benchmark pipeline.

Stages write their artifacts into one output directory and refuse to mix
configurations: every stage checks the resolved config copy already present
there. Typical sequence::

    ginx gen-data  --config cfg.json --out runs/demo
    ginx train     --config cfg.json --out runs/demo
    ginx explain   --config cfg.json --out runs/demo
    ginx ginx-eval --config cfg.json --out runs/demo [--no-finetune]
    ginx fidelity  --config cfg.json --out runs/demo
    ginx report    --out runs/demo

The default output root comes from $GINX_OUT_ROOT when --out and the
config's "out" field are absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig, dump_config, load_config
from .dataio import (
    atomic_write_text,
    file_sha256,
    load_dataset,
    load_masks,
    save_dataset,
    save_masks,
)
from .errors import ConfigError, GinxError, MissingArtifactError
from .explainers import explain_dataset
from .graphs import Dataset
from .metrics import auc_score, critical_threshold, fidelity_suite, optimal_threshold
from .pipeline import (
    GinxCurve,
    curve_summary,
    ginx_eval,
    ginx_no_finetune,
    results_csv,
)
from .report import write_report
from .synth import build_dataset
from .training import load_checkpoint, pretrain, save_checkpoint

DATASET_FILE = "dataset.gds"


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _resolve_out(cfg: RunConfig, args) -> str:
    if getattr(args, "out", None):
        return args.out
    if cfg.out:
        return cfg.out
    root = os.environ.get("GINX_OUT_ROOT")
    if root:
        name = cfg.data.preset or os.path.splitext(
            os.path.basename(cfg.data.path or "run"))[0]
        return os.path.join(root, name)
    raise ConfigError(
        "no output directory: pass --out, set config 'out', or set GINX_OUT_ROOT"
    )


def _apply_seed_offset(cfg: RunConfig, offset: int) -> None:
    if offset:
        cfg.train.seeds = tuple(s + offset for s in cfg.train.seeds)


def _prepare(args) -> tuple[RunConfig, str]:
    cfg = load_config(args.config)
    _apply_seed_offset(cfg, getattr(args, "seed_offset", 0) or 0)
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    out = _resolve_out(cfg, args)
    os.makedirs(out, exist_ok=True)
    resolved = os.path.join(out, "config.resolved.json")
    if os.path.exists(resolved):
        with open(resolved, "r", encoding="utf-8") as fh:
            from .config import config_from_dict

            existing = config_from_dict(json.load(fh))
        if existing.hash() != cfg.hash():
            raise ConfigError(
                f"{out} holds artifacts for a different config "
                f"(hash {existing.hash()[:12]} != {cfg.hash()[:12]}); "
                f"use a fresh output directory"
            )
    atomic_write_text(resolved, dump_config(cfg))
    return cfg, out


def _dataset_path(cfg: RunConfig, out: str) -> str:
    return cfg.data.path if cfg.data.path else os.path.join(out, DATASET_FILE)


def _load_dataset_artifact(cfg: RunConfig, out: str) -> tuple[Dataset, str]:
    path = _dataset_path(cfg, out)
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"dataset file {path} not found; run `ginx gen-data` first"
        )
    return load_dataset(path), file_sha256(path)


def _checkpoint_path(out: str, seed: int) -> str:
    return os.path.join(out, f"model_seed{seed}.ckpt")


def _load_model_artifact(cfg: RunConfig, out: str):
    seed = cfg.train.seeds[0]
    path = _checkpoint_path(out, seed)
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"checkpoint {path} not found; run `ginx train` first"
        )
    return load_checkpoint(path, require={"hidden": cfg.hidden}), seed


def cmd_gen_data(args) -> int:
    cfg, out = _prepare(args)
    if cfg.data.path:
        raise ConfigError(
            "dataset.path points at an existing file; gen-data only applies "
            "to preset-generated datasets"
        )
    spec = cfg.data.spec()
    t0 = time.time()
    dataset = build_dataset(spec)
    path = os.path.join(out, DATASET_FILE)
    save_dataset(dataset, path)
    _log(f"gen-data: wrote {path} ({len(dataset)} graphs) "
         f"in {time.time() - t0:.1f}s")
    return 0


def cmd_train(args) -> int:
    cfg, out = _prepare(args)
    dataset, ds_hash = _load_dataset_artifact(cfg, out)
    accs = {}
    epochs = {}
    for seed in cfg.train.seeds:
        t0 = time.time()
        model, hist = pretrain(dataset, cfg.train, hidden=cfg.hidden, seed=seed)
        save_checkpoint(model, _checkpoint_path(out, seed))
        hist_payload = {
            "seed": seed,
            "train_loss": hist.train_loss,
            "val_loss": hist.val_loss,
            "val_accuracy": hist.val_accuracy,
            "chosen_epoch": hist.chosen_epoch,
            "test_accuracy": hist.test_accuracy,
        }
        atomic_write_text(
            os.path.join(out, f"history_seed{seed}.json"),
            json.dumps(hist_payload, sort_keys=True) + "\n",
        )
        accs[str(seed)] = hist.test_accuracy
        epochs[str(seed)] = hist.chosen_epoch
        _log(f"train: seed {seed} test_accuracy={hist.test_accuracy:.4f} "
             f"(epoch {hist.chosen_epoch}, {time.time() - t0:.0f}s)")
    summary = {
        "code_version": __version__,
        "config_hash": cfg.hash(),
        "dataset": dataset.name,
        "dataset_hash": ds_hash,
        "hidden": cfg.hidden,
        "test_accuracy": accs,
        "chosen_epoch": epochs,
        "mean_test_accuracy": float(np.mean(list(accs.values()))),
    }
    atomic_write_text(
        os.path.join(out, "train_summary.json"),
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
    )
    _log(f"train: mean test accuracy {summary['mean_test_accuracy']:.4f}")
    return 0


def cmd_explain(args) -> int:
    cfg, out = _prepare(args)
    dataset, ds_hash = _load_dataset_artifact(cfg, out)
    model, seed = _load_model_artifact(cfg, out)
    for entry in cfg.explainers:
        t0 = time.time()
        masks = explain_dataset(entry.name, model, dataset, entry.config)
        path = os.path.join(out, f"masks_{entry.name}.gmk")
        save_masks(path, dataset, masks, entry.name, cfg.hash(), ds_hash)
        _log(f"explain: {entry.name} -> {path} ({time.time() - t0:.0f}s)")
    return 0


def _load_masks_artifact(cfg: RunConfig, out: str, dataset: Dataset,
                         ds_hash: str, name: str):
    path = os.path.join(out, f"masks_{name}.gmk")
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"mask file {path} not found; run `ginx explain` first"
        )
    meta, masks = load_masks(path, dataset)
    if meta["dataset_hash"] != ds_hash:
        raise GinxError(
            f"{path} was produced for a different dataset "
            f"({meta['dataset_hash'][:12]} != {ds_hash[:12]})"
        )
    return masks


def _explainer_stats(cfg: RunConfig, dataset: Dataset, model, all_masks: dict):
    test_idx = dataset.indices("test")
    test_graphs = [dataset.graphs[i] for i in test_idx]
    has_truth = dataset.truth_masks is not None
    test_truth = ([dataset.truth_masks[i] for i in test_idx]
                  if has_truth else None)
    stats: dict[str, dict] = {}
    for name, masks in all_masks.items():
        test_masks = [masks[i] for i in test_idx]
        info: dict = {
            "critical_threshold": critical_threshold(test_masks, test_graphs),
            "auc": (auc_score(test_masks, test_truth, test_graphs)
                    if has_truth else None),
            "fidelity": {},
        }
        for mode in cfg.modes:
            report = fidelity_suite(model, dataset, masks, mode,
                                    cfg.fidelity_truncation)
            info["fidelity"][mode] = report.to_dict()
        stats[name] = info
    return stats


def cmd_ginx_eval(args) -> int:
    cfg, out = _prepare(args)
    if getattr(args, "no_finetune", False):
        cfg.finetune = False
    dataset, ds_hash = _load_dataset_artifact(cfg, out)
    model, _ = _load_model_artifact(cfg, out)
    all_masks = {
        e.name: _load_masks_artifact(cfg, out, dataset, ds_hash, e.name)
        for e in cfg.explainers
    }
    curves: list[GinxCurve] = []
    for entry in cfg.explainers:
        for mode in cfg.modes:
            t0 = time.time()
            if cfg.finetune:
                curve = ginx_eval(
                    model, dataset, all_masks[entry.name], mode, cfg.train,
                    seeds=cfg.train.seeds, thresholds=cfg.thresholds,
                    explainer=entry.name, workers=cfg.workers,
                )
            else:
                curve = ginx_no_finetune(
                    model, dataset, all_masks[entry.name], mode,
                    seeds=cfg.train.seeds, thresholds=cfg.thresholds,
                    explainer=entry.name,
                )
            curves.append(curve)
            _log(f"ginx-eval: {entry.name}/{mode} "
                 f"mean={np.round(curve.mean(), 3).tolist()} "
                 f"({time.time() - t0:.0f}s)")
            for failure in curve.failures:
                _log(f"ginx-eval: warning: {failure}")

    suffix = "" if cfg.finetune else "_nofinetune"
    csv_path = os.path.join(out, f"results{suffix}.csv")
    atomic_write_text(csv_path, results_csv(curves))

    has_truth = dataset.truth_masks is not None
    t_star = None
    truth_fraction = None
    if has_truth:
        truth_fraction = critical_threshold(dataset.truth_masks, dataset.graphs)
        t_star = optimal_threshold(dataset.truth_masks, dataset.graphs)
    elif cfg.manual_optimal_threshold is not None:
        t_star = cfg.manual_optimal_threshold
    summary = {
        "code_version": __version__,
        "config_hash": cfg.hash(),
        "dataset": dataset.name,
        "dataset_hash": ds_hash,
        "finetuned": cfg.finetune,
        "optimal_threshold": t_star,
        "truth_nonzero_fraction": truth_fraction,
        "explainers": _explainer_stats(cfg, dataset, model, all_masks),
        "curves": [curve_summary(c) for c in curves],
    }
    atomic_write_text(
        os.path.join(out, f"summary{suffix}.json"),
        json.dumps(summary, sort_keys=True, indent=2) + "\n",
    )
    _log(f"ginx-eval: wrote {csv_path}")
    return 0


def cmd_fidelity(args) -> int:
    cfg, out = _prepare(args)
    dataset, ds_hash = _load_dataset_artifact(cfg, out)
    model, _ = _load_model_artifact(cfg, out)
    all_masks = {
        e.name: _load_masks_artifact(cfg, out, dataset, ds_hash, e.name)
        for e in cfg.explainers
    }
    payload = {
        "code_version": __version__,
        "config_hash": cfg.hash(),
        "dataset": dataset.name,
        "dataset_hash": ds_hash,
        "explainers": _explainer_stats(cfg, dataset, model, all_masks),
    }
    path = os.path.join(out, "fidelity.json")
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    _log(f"fidelity: wrote {path}")
    return 0


def cmd_report(args) -> int:
    out = args.out
    if not out:
        root = os.environ.get("GINX_OUT_ROOT")
        if not root:
            raise ConfigError("report needs --out or GINX_OUT_ROOT")
        out = root
    if not os.path.isdir(out):
        raise MissingArtifactError(f"output directory {out} does not exist")
    written = write_report(out)
    for path in written:
        _log(f"report: wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ginx",
        description="Retrain-based benchmark for graph-explainability methods",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed-offset", type=int, default=0,
                       help="shift every seed by K")
        p.add_argument("--workers", type=int,
                       help="parallel grid workers (overrides config)")

    add_common(sub.add_parser("gen-data", help="generate and save the dataset"))
    add_common(sub.add_parser("train", help="pretrain one model per seed"))
    add_common(sub.add_parser("explain", help="write mask files per explainer"))
    p_eval = sub.add_parser("ginx-eval", help="fine-tuning evaluation grid")
    add_common(p_eval)
    p_eval.add_argument("--no-finetune", action="store_true",
                        help="frozen-model diagnostic instead of fine-tuning")
    add_common(sub.add_parser("fidelity", help="fidelity/faithfulness suite"))
    p_rep = sub.add_parser("report", help="merge summaries into tables")
    p_rep.add_argument("--out", help="directory holding run artifacts")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": cmd_gen_data,
        "train": cmd_train,
        "explain": cmd_explain,
        "ginx-eval": cmd_ginx_eval,
        "fidelity": cmd_fidelity,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except GinxError as exc:
        print(f"ginx: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
