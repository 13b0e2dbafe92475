#!/usr/bin/env python3
"""Desk-scale baseline run: house/grid dataset, truth/inverse/random.

Reproduces the headline comparison (truth collapses, inverse stays flat,
random lags) end to end, including the frozen-model diagnostic. Expect
roughly an hour on two cores; pass --quick for a minutes-long smoke run.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from ginx.cli import main as ginx

HERE = os.path.dirname(os.path.abspath(__file__))


def run(config: str, out: str, workers: int) -> int:
    stages = [
        ["gen-data", "--config", config, "--out", out],
        ["train", "--config", config, "--out", out],
        ["explain", "--config", config, "--out", out],
        ["ginx-eval", "--config", config, "--out", out, "--workers", str(workers)],
        ["ginx-eval", "--config", config, "--out", out, "--no-finetune"],
        ["fidelity", "--config", config, "--out", out],
        ["report", "--out", out],
    ]
    for stage in stages:
        code = ginx(stage)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/housegrid_baselines")
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--quick", action="store_true",
                        help="200-graph config instead of the full 2,000")
    args = parser.parse_args()
    name = "quick_demo.json" if args.quick else "housegrid_baselines.json"
    config = os.path.join(HERE, "..", "configs", name)
    sys.exit(run(config, args.out, args.workers))
