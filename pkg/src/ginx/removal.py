"""Hard and soft edge-removal semantics shared by every evaluation metric.

Hard removal deletes the selected undirected edges (both directions), drops
nodes left with degree zero, and compacts indices; if nothing survives, the
lowest-index node is kept so the graph stays evaluable. Soft removal zeroes
the selected edges' weights and preserves all structure. Both modes select
the identical edge set for identical (mask, t, rng).

Selection ranks nonzero-mask edges by value. Wherever the mask expresses no
preference, the selection is an explicitly random (seeded) assignment: ties
among equal values are ordered by a seeded permutation, and when the budget
ceil(t * Eu) exceeds the number of nonzero entries the shortfall is filled
by a seeded uniform draw over the zero-mask edges. Deterministic systematic
tie orders (e.g. by edge index) inject structure the method never emitted:
on preferential-attachment graphs, index order tracks node age, and
removing ties in that order measurably understates distribution shift.
Both draws are pure functions of the rng passed in, which the evaluation
grid derives from (run seed, graph index).
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import InvalidFractionError
from .graphs import (
    Dataset,
    EdgeMask,
    Graph,
    edge_budget,
    graph_from_pairs,
    pairing,
    undirected_values,
)

MODES = ("hard", "soft")


def select_edges(
    mask: EdgeMask,
    g: Graph,
    t: float,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Undirected edge indices targeted at fraction ``t`` (sorted)."""
    p = pairing(g)
    k = edge_budget(t, p.num_undirected)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    uv = undirected_values(mask, g)
    rng = np.random.default_rng(0) if rng is None else rng
    tie_order = rng.permutation(uv.shape[0])
    order = np.lexsort((tie_order, -uv))
    ranked = order[uv[order] > 0.0]
    if k <= ranked.shape[0]:
        chosen = ranked[:k]
    else:
        zeros = np.where(uv == 0.0)[0]
        fill = rng.choice(zeros, size=k - ranked.shape[0], replace=False)
        chosen = np.concatenate([ranked, fill])
    return np.sort(chosen)


def remove_pairs(g: Graph, selected: np.ndarray, mode: str) -> Graph:
    """Remove the given undirected edges under hard or soft semantics."""
    if mode not in MODES:
        raise ValueError(f"unknown removal mode {mode!r}; known: {MODES}")
    p = pairing(g)
    eu = p.num_undirected
    drop = np.zeros(eu, dtype=bool)
    if selected.size:
        drop[selected] = True
    keep = ~drop
    uw = g.edge_weights[p.edges_of_pair[:, 0]]
    uf = g.edge_features[p.edges_of_pair[:, 0]]
    if mode == "soft":
        new_w = uw.copy()
        new_w[drop] = 0.0
        return graph_from_pairs(
            g.num_nodes,
            [tuple(pq) for pq in p.pairs],
            g.label,
            node_features=g.node_features,
            pair_features=uf,
            pair_weights=new_w,
            d_n=g.d_n,
            d_e=g.d_e,
        )
    kept_pairs = p.pairs[keep]
    if kept_pairs.shape[0]:
        survivors = np.unique(kept_pairs)
    else:
        survivors = np.zeros(1, dtype=np.int64)  # placeholder node
    remap = -np.ones(g.num_nodes, dtype=np.int64)
    remap[survivors] = np.arange(survivors.shape[0])
    return graph_from_pairs(
        int(survivors.shape[0]),
        [(int(remap[i]), int(remap[j])) for i, j in kept_pairs],
        g.label,
        node_features=g.node_features[survivors],
        pair_features=uf[keep],
        pair_weights=uw[keep],
        d_n=g.d_n,
        d_e=g.d_e,
    )


def hard_remove(
    g: Graph,
    mask: EdgeMask,
    t: float,
    rng: Optional[np.random.Generator] = None,
) -> Graph:
    """Delete the top-t edges structurally; drop newly isolated nodes."""
    return remove_pairs(g, select_edges(mask, g, t, rng), "hard")


def soft_remove(
    g: Graph,
    mask: EdgeMask,
    t: float,
    rng: Optional[np.random.Generator] = None,
) -> Graph:
    """Zero the top-t edges' weights; structure unchanged."""
    return remove_pairs(g, select_edges(mask, g, t, rng), "soft")


def keep_pairs(g: Graph, kept: np.ndarray, mode: str) -> Graph:
    """Complement view: remove everything except ``kept`` undirected edges."""
    p = pairing(g)
    drop = np.ones(p.num_undirected, dtype=bool)
    if kept.size:
        drop[kept] = False
    return remove_pairs(g, np.where(drop)[0], mode)


def degrade_dataset(
    dataset: Dataset,
    masks: list[EdgeMask],
    t: float,
    mode: str,
    run_seed: int,
) -> Dataset:
    """Per-graph top-t removal over the whole dataset.

    The random fill beyond a mask's nonzero support is a pure function of
    (run_seed, graph index), so parallel evaluation cannot change output.
    """
    if not (0.0 <= t <= 1.0):
        raise InvalidFractionError(f"fraction t={t!r} outside [0, 1]")
    if len(masks) != len(dataset):
        raise ValueError("one mask per dataset graph required")
    out = []
    for i, g in enumerate(dataset.graphs):
        rng = np.random.default_rng((run_seed, i))
        sel = select_edges(masks[i], g, t, rng)
        out.append(remove_pairs(g, sel, mode))
    return Dataset(
        name=f"{dataset.name}@{mode}:t={t:g}",
        graphs=out,
        splits=list(dataset.splits),
        truth_masks=None,
    )
