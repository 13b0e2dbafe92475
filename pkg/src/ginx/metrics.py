"""Fidelity suite, AUC accuracy, and mask-sparsity thresholds.

Fidelity follows the four-form convention: the minus forms feed the model
the explanation-only graph h(G), the plus forms feed the complement
G \\ h(G); prob forms track |delta p(true label)|, acc forms |delta
correctness|. Faithfulness is 1 - fid_minus_prob. All forms are measured
against the true label and averaged over the test split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import GnnModel, predict_probs
from .errors import GinxError, UnsupportedDatasetError
from .graphs import (
    Dataset,
    EdgeMask,
    Graph,
    edge_budget,
    nonzero_fraction,
    undirected_values,
)
from .removal import keep_pairs, remove_pairs


@dataclass(frozen=True)
class Truncation:
    """How the explanation subgraph h(G) is cut from a mask.

    kind "topk" keeps the k highest-valued nonzero edges, "fraction" keeps
    ceil(t * Eu) of them, "full" keeps every nonzero edge. Zero-valued edges
    are never part of an explanation, so a sparse mask may keep fewer edges
    than the budget; that keeps fidelity deterministic.
    """

    kind: str = "full"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("topk", "fraction", "full"):
            raise ValueError(f"unknown truncation kind {self.kind!r}")
        if self.kind == "topk" and (self.value < 1 or self.value != int(self.value)):
            raise ValueError("topk truncation needs a positive integer value")
        if self.kind == "fraction" and not (0.0 <= self.value <= 1.0):
            raise ValueError("fraction truncation needs value in [0, 1]")

    def describe(self) -> str:
        if self.kind == "full":
            return "full"
        if self.kind == "topk":
            return f"top{int(self.value)}"
        return f"fraction{self.value:g}"


def kept_edges(mask: EdgeMask, g: Graph, truncation: Truncation) -> np.ndarray:
    """Undirected indices forming the explanation under ``truncation``."""
    uv = undirected_values(mask, g)
    order = np.lexsort((np.arange(uv.shape[0]), -uv))
    ranked = order[uv[order] > 0.0]
    if truncation.kind == "full":
        budget = ranked.shape[0]
    elif truncation.kind == "topk":
        budget = int(truncation.value)
    else:
        budget = edge_budget(truncation.value, uv.shape[0])
    return np.sort(ranked[:budget])


@dataclass(frozen=True)
class FidelityReport:
    fid_minus_prob: float
    fid_minus_acc: float
    fid_plus_prob: float
    fid_plus_acc: float
    faithfulness: float
    mode: str
    truncation: str
    n_graphs: int

    def to_dict(self) -> dict:
        return {
            "fid_minus_prob": self.fid_minus_prob,
            "fid_minus_acc": self.fid_minus_acc,
            "fid_plus_prob": self.fid_plus_prob,
            "fid_plus_acc": self.fid_plus_acc,
            "faithfulness": self.faithfulness,
            "mode": self.mode,
            "truncation": self.truncation,
            "n_graphs": self.n_graphs,
        }


def fidelity_suite(
    model: GnnModel,
    dataset: Dataset,
    masks: Sequence[EdgeMask],
    mode: str,
    truncation: Truncation = Truncation(),
    split: str = "test",
) -> FidelityReport:
    """Four fidelity forms + faithfulness over one split."""
    idx = dataset.indices(split)
    if not idx:
        raise GinxError(f"split {split!r} is empty")
    if len(masks) != len(dataset):
        raise ValueError("one mask per dataset graph required")
    graphs = [dataset.graphs[i] for i in idx]
    labels = np.asarray([g.label for g in graphs])
    expl_graphs: list[Graph] = []
    compl_graphs: list[Graph] = []
    for i, g in zip(idx, graphs):
        kept = kept_edges(masks[i], g, truncation)
        expl_graphs.append(keep_pairs(g, kept, mode))
        compl_graphs.append(remove_pairs(g, kept, mode))
    rows = np.arange(len(graphs))
    p_orig = predict_probs(model, graphs)
    p_expl = predict_probs(model, expl_graphs)
    p_compl = predict_probs(model, compl_graphs)
    prob_orig = p_orig[rows, labels]
    acc_orig = (p_orig.argmax(axis=1) == labels).astype(np.float64)
    prob_expl = p_expl[rows, labels]
    acc_expl = (p_expl.argmax(axis=1) == labels).astype(np.float64)
    prob_compl = p_compl[rows, labels]
    acc_compl = (p_compl.argmax(axis=1) == labels).astype(np.float64)
    fid_minus_prob = float(np.abs(prob_orig - prob_expl).mean())
    report = FidelityReport(
        fid_minus_prob=fid_minus_prob,
        fid_minus_acc=float(np.abs(acc_orig - acc_expl).mean()),
        fid_plus_prob=float(np.abs(prob_orig - prob_compl).mean()),
        fid_plus_acc=float(np.abs(acc_orig - acc_compl).mean()),
        faithfulness=1.0 - fid_minus_prob,
        mode=mode,
        truncation=truncation.describe(),
        n_graphs=len(graphs),
    )
    return report


def auc_score(
    masks: Sequence[EdgeMask],
    truth_masks: Optional[Sequence[EdgeMask]],
    graphs: Sequence[Graph],
) -> float:
    """ROC AUC of mask values against binary truth, pooled over all
    undirected edges of all graphs; ties take the midrank."""
    if truth_masks is None:
        raise UnsupportedDatasetError("AUC needs ground-truth masks")
    scores = np.concatenate(
        [undirected_values(m, g) for m, g in zip(masks, graphs)]
    )
    labels = np.concatenate(
        [undirected_values(tm, g) > 0.0 for tm, g in zip(truth_masks, graphs)]
    )
    n_pos = int(labels.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise GinxError("AUC undefined: pooled edges are single-class")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.shape[0])
    sorted_scores = scores[order]
    # midranks: average 1-based rank within each tie group
    boundaries = np.concatenate(
        [[0], np.where(np.diff(sorted_scores) != 0)[0] + 1, [scores.shape[0]]]
    )
    for lo, hi in zip(boundaries[:-1], boundaries[1:]):
        ranks[order[lo:hi]] = 0.5 * (lo + 1 + hi)
    rank_sum = float(ranks[labels].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def critical_threshold(
    masks: Sequence[EdgeMask], graphs: Sequence[Graph]
) -> float:
    """Mean nonzero undirected-edge fraction: beyond it, selection is random."""
    if not masks:
        raise GinxError("critical threshold needs at least one mask")
    return float(
        np.mean([nonzero_fraction(m, g) for m, g in zip(masks, graphs)])
    )


def optimal_threshold(
    truth_masks: Optional[Sequence[EdgeMask]],
    graphs: Sequence[Graph],
    step: float = 0.1,
    manual: Optional[float] = None,
) -> float:
    """Smallest grid multiple of ``step`` covering the truth masks' nonzero
    fraction. Without ground truth a manual threshold must be supplied."""
    if truth_masks is None:
        if manual is None:
            raise UnsupportedDatasetError(
                "no ground-truth masks: supply a manual threshold"
            )
        return manual
    frac = critical_threshold(truth_masks, graphs)
    grid_steps = math.ceil(frac / step - 1e-9)
    return round(max(1, grid_steps) * step, 10)
