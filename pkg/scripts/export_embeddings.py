#!/usr/bin/env python3
"""Dump post-readout graph embeddings for external 2-D projection.

Reads a trained checkpoint and a dataset file from a run directory and
writes one row per graph: index, split, label, then the H embedding
coordinates. Feed the TSV to any projector (t-SNE, UMAP, PCA) to look for
out-of-distribution structure; optionally append rows for degraded graphs
by passing an explainer mask file and a threshold.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ginx.dataio import fmt_real, load_dataset, load_masks
from ginx.engine import readout_embedding
from ginx.removal import degrade_dataset
from ginx.training import load_checkpoint


def rows_for(dataset, model, tag):
    for i, g in enumerate(dataset.graphs):
        emb = readout_embedding(model, g)
        yield "\t".join(
            [str(i), tag, dataset.splits[i], str(g.label)]
            + [fmt_real(v) for v in emb]
        )


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--run", required=True, help="run directory")
    parser.add_argument("--seed", type=int, default=0, help="checkpoint seed")
    parser.add_argument("--masks", help="explainer name for a degraded view")
    parser.add_argument("--t", type=float, default=0.3)
    parser.add_argument("--mode", default="hard", choices=("hard", "soft"))
    parser.add_argument("--out", help="output TSV (default: <run>/embeddings.tsv)")
    args = parser.parse_args()

    dataset = load_dataset(os.path.join(args.run, "dataset.gds"))
    model = load_checkpoint(os.path.join(args.run, f"model_seed{args.seed}.ckpt"))
    out_path = args.out or os.path.join(args.run, "embeddings.tsv")
    lines = ["index\tvariant\tsplit\tlabel\t" + "\t".join(
        f"h{j}" for j in range(model.hidden))]
    lines.extend(rows_for(dataset, model, "original"))
    if args.masks:
        _, masks = load_masks(
            os.path.join(args.run, f"masks_{args.masks}.gmk"), dataset)
        degraded = degrade_dataset(dataset, masks, args.t, args.mode, run_seed=0)
        lines.extend(rows_for(degraded, model, f"{args.masks}@t={args.t:g}"))
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out_path} ({len(lines) - 1} rows)")
