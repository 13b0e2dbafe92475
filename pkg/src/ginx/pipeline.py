"""Fine-tune-based evaluation grid: per-threshold curves and edge ranking.

For each degradation level t, the top-t explanatory edges are removed from
every graph, the pretrained model is fine-tuned on the degraded train split
(always starting from the original pretrained parameters, never chained
from the previous t), and the score at t is 1 - test accuracy. High values
mean the removed edges carried information the model needed. The frozen
no-fine-tune variant of the same grid is the out-of-distribution
diagnostic: a drop there that fine-tuning repairs is distribution shift,
not information loss.

The (t, seed) grid is embarrassingly parallel; cells are deterministic
given (masks, t, seed), so worker count never changes results.
"""

from __future__ import annotations

import multiprocessing as mp
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataio import fmt_real
from .engine import GnnModel, predict_probs
from .errors import MissingThresholdError, TrainingDivergedError
from .graphs import Dataset, EdgeMask
from .removal import degrade_dataset
from .training import TrainConfig, test_accuracy, train

DEFAULT_THRESHOLDS = tuple(round(0.1 * k, 10) for k in range(10))  # 0.0 .. 0.9


@dataclass
class GinxCurve:
    """Per-threshold, per-seed scores for one (explainer, mode) pair."""

    dataset: str
    explainer: str
    mode: str
    thresholds: tuple[float, ...]
    seeds: tuple[int, ...]
    accuracy: np.ndarray          # (T, S), NaN where a cell failed
    finetuned: bool = True
    failures: list[str] = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return 1.0 - self.accuracy

    @property
    def partial(self) -> bool:
        return bool(np.isnan(self.accuracy).any())

    def mean(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.nanmean(self.values, axis=1)

    def stderr(self) -> np.ndarray:
        vals = self.values
        out = np.zeros(vals.shape[0])
        for i in range(vals.shape[0]):
            row = vals[i][~np.isnan(vals[i])]
            if row.size > 1:
                out[i] = float(row.std(ddof=1) / np.sqrt(row.size))
        return out

    def value_at(self, t: float) -> float:
        for i, ti in enumerate(self.thresholds):
            if abs(ti - t) < 1e-9:
                return float(self.mean()[i])
        raise MissingThresholdError(f"curve has no threshold {t:g}")


# Worker globals, populated once per process by the pool initializer so the
# dataset and masks are not re-pickled for every cell.
_CTX: dict = {}


def _init_worker(model, dataset, masks, mode, cfg):
    _CTX.update(model=model, dataset=dataset, masks=masks, mode=mode, cfg=cfg)


def _run_cell(args: tuple[float, int]) -> tuple[float, int, Optional[float], str]:
    t, seed = args
    model: GnnModel = _CTX["model"]
    dataset: Dataset = _CTX["dataset"]
    degraded = degrade_dataset(dataset, _CTX["masks"], t, _CTX["mode"], run_seed=seed)
    try:
        tuned, _ = train(model, degraded, _CTX["cfg"], seed=seed)
    except TrainingDivergedError as exc:
        return t, seed, None, f"t={t:g} seed={seed}: {exc}"
    return t, seed, test_accuracy(tuned, degraded, "test"), ""


def ginx_eval(
    model: GnnModel,
    dataset: Dataset,
    masks: Sequence[EdgeMask],
    mode: str,
    cfg: TrainConfig,
    seeds: Optional[Sequence[int]] = None,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    explainer: str = "",
    workers: int = 1,
    progress: bool = False,
) -> GinxCurve:
    """Fine-tuning grid over (threshold x seed).

    Every cell restarts from the pretrained parameters. Diverged cells are
    recorded in ``failures`` and left NaN; the curve is then partial.
    """
    seeds = tuple(cfg.seeds if seeds is None else seeds)
    thresholds = tuple(float(t) for t in thresholds)
    if any(t2 <= t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing")
    acc = np.full((len(thresholds), len(seeds)), np.nan)
    failures: list[str] = []
    cells = [(t, s) for t in thresholds for s in seeds]
    if workers > 1:
        ctx = mp.get_context("fork")
        with ctx.Pool(
            processes=workers,
            initializer=_init_worker,
            initargs=(model, dataset, list(masks), mode, cfg),
        ) as pool:
            results = pool.map(_run_cell, cells, chunksize=1)
    else:
        _init_worker(model, dataset, list(masks), mode, cfg)
        results = []
        for cell in cells:
            results.append(_run_cell(cell))
            if progress:
                t, s, a, _ = results[-1]
                print(f"  t={t:g} seed={s} acc={a if a is None else round(a, 4)}",
                      file=sys.stderr, flush=True)
    for t, s, a, err in results:
        ti = thresholds.index(t)
        si = seeds.index(s)
        if a is None:
            failures.append(err)
        else:
            acc[ti, si] = a
    return GinxCurve(
        dataset=dataset.name,
        explainer=explainer,
        mode=mode,
        thresholds=thresholds,
        seeds=seeds,
        accuracy=acc,
        finetuned=True,
        failures=failures,
    )


def ginx_no_finetune(
    model: GnnModel,
    dataset: Dataset,
    masks: Sequence[EdgeMask],
    mode: str,
    seeds: Sequence[int] = (0,),
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    explainer: str = "",
) -> GinxCurve:
    """Same degradation grid evaluated with the frozen pretrained model.

    Only the test split needs degrading; per-seed variation comes solely
    from the random fill beyond a mask's nonzero support.
    """
    seeds = tuple(seeds)
    thresholds = tuple(float(t) for t in thresholds)
    test_idx = dataset.indices("test")
    if not test_idx:
        raise ValueError("dataset has no test split")
    test_ds = Dataset(
        name=dataset.name,
        graphs=[dataset.graphs[i] for i in test_idx],
        splits=["test"] * len(test_idx),
        truth_masks=None,
    )
    test_masks = [masks[i] for i in test_idx]
    acc = np.full((len(thresholds), len(seeds)), np.nan)
    for ti, t in enumerate(thresholds):
        for si, seed in enumerate(seeds):
            degraded = degrade_dataset(test_ds, test_masks, t, mode, run_seed=seed)
            labels = np.asarray([g.label for g in degraded.graphs])
            probs = predict_probs(model, degraded.graphs)
            acc[ti, si] = float((probs.argmax(axis=1) == labels).mean())
    return GinxCurve(
        dataset=dataset.name,
        explainer=explainer,
        mode=mode,
        thresholds=thresholds,
        seeds=seeds,
        accuracy=acc,
        finetuned=False,
    )


def edgerank(curve: GinxCurve) -> float:
    """Weighted sum of curve increments, (1 - t) * (score(t+0.1) - score(t)).

    Front-loads credit: methods that rank the most informative edges first
    collect their accuracy drop at low t where the weight is largest.
    Requires thresholds 0.0 through 0.9.
    """
    required = [round(0.1 * k, 10) for k in range(10)]
    means = {}
    curve_means = curve.mean()
    for ti, t in enumerate(curve.thresholds):
        for r in required:
            if abs(t - r) < 1e-9:
                means[r] = float(curve_means[ti])
    missing = [r for r in required if r not in means]
    if missing:
        raise MissingThresholdError(
            f"edge ranking needs thresholds {required}; missing {missing}"
        )
    if any(np.isnan(v) for v in means.values()):
        raise MissingThresholdError("edge ranking needs a complete curve")
    total = 0.0
    for k in range(9):
        t0, t1 = required[k], required[k + 1]
        total += (1.0 - t0) * (means[t1] - means[t0])
    return total


def curve_csv_rows(curve: GinxCurve) -> list[str]:
    """CSV rows (dataset, explainer, mode, t, seed, test_accuracy, ginx)."""
    rows = []
    for ti, t in enumerate(curve.thresholds):
        for si, s in enumerate(curve.seeds):
            a = curve.accuracy[ti, si]
            acc_str = "NA" if np.isnan(a) else fmt_real(a)
            ginx_str = "NA" if np.isnan(a) else fmt_real(1.0 - a)
            rows.append(
                f"{curve.dataset},{curve.explainer},{curve.mode},"
                f"{fmt_real(t)},{s},{acc_str},{ginx_str}"
            )
    return rows


RESULTS_HEADER = "dataset,explainer,mode,t,seed,test_accuracy,ginx"


def results_csv(curves: Sequence[GinxCurve]) -> str:
    lines = [RESULTS_HEADER]
    for curve in curves:
        lines.extend(curve_csv_rows(curve))
    return "\n".join(lines) + "\n"


def curve_summary(curve: GinxCurve) -> dict:
    summary = {
        "explainer": curve.explainer,
        "mode": curve.mode,
        "finetuned": curve.finetuned,
        "thresholds": [float(t) for t in curve.thresholds],
        "seeds": [int(s) for s in curve.seeds],
        "mean": [None if np.isnan(v) else float(v) for v in curve.mean()],
        "stderr": [float(v) for v in curve.stderr()],
        "partial": curve.partial,
        "failures": list(curve.failures),
    }
    try:
        summary["edgerank"] = edgerank(curve)
    except MissingThresholdError:
        summary["edgerank"] = None
    return summary
