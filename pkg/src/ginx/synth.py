"""Synthetic motif datasets: preferential-attachment bases with planted motifs.

Two presets are shipped: a 1,000-graph set labelling house vs 5-cycle motifs
on small bases, and a 2,000-graph set labelling house vs 3x3-grid motifs on
80-node bases with 2-5 motifs per graph. Ground-truth masks flag the motifs'
internal edges (bridges excluded). Node and edge features are constant 1.0 so
classifiers must rely on structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DatasetSpecError
from .graphs import Dataset, EdgeMask, Graph, graph_from_pairs, pairing

# Local (node-offset 0) undirected edges of each motif.
MOTIF_EDGES = {
    # 4-cycle base with an apex tied to two adjacent base nodes
    "house": [(0, 1), (1, 2), (2, 3), (0, 3), (0, 4), (1, 4)],
    "cycle5": [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)],
    "grid3x3": [
        (r * 3 + c, r * 3 + c + 1) for r in range(3) for c in range(2)
    ] + [
        (r * 3 + c, (r + 1) * 3 + c) for r in range(2) for c in range(3)
    ],
}
MOTIF_NODES = {"house": 5, "cycle5": 5, "grid3x3": 9}


@dataclass(frozen=True)
class DatasetSpec:
    """Everything needed to regenerate a dataset deterministically."""

    name: str
    num_graphs: int
    base_nodes: int
    ba_attach: int
    motifs_per_graph: tuple[int, int]  # inclusive range
    class_rule: tuple[tuple[str, int], ...]  # (motif kind, label) pairs
    gen_seed: int = 0
    split_seed: int = 1

    def motif_for_label(self, label: int) -> str:
        for kind, lab in self.class_rule:
            if lab == label:
                return kind
        raise DatasetSpecError(f"class_rule defines no motif for label {label}")

    @property
    def num_classes(self) -> int:
        return len({lab for _, lab in self.class_rule})


def ba2motifs_spec(gen_seed: int = 0, split_seed: int = 1) -> DatasetSpec:
    """1,000 graphs, 20-node base + one 5-node motif, house vs 5-cycle."""
    return DatasetSpec(
        name="ba2motifs",
        num_graphs=1000,
        base_nodes=20,
        ba_attach=1,
        motifs_per_graph=(1, 1),
        class_rule=(("house", 0), ("cycle5", 1)),
        gen_seed=gen_seed,
        split_seed=split_seed,
    )


def bahousegrid_spec(gen_seed: int = 0, split_seed: int = 1) -> DatasetSpec:
    """2,000 graphs, 80-node base, 2-5 house or 3x3-grid motifs per graph."""
    return DatasetSpec(
        name="bahousegrid",
        num_graphs=2000,
        base_nodes=80,
        ba_attach=5,
        motifs_per_graph=(2, 5),
        class_rule=(("house", 0), ("grid3x3", 1)),
        gen_seed=gen_seed,
        split_seed=split_seed,
    )


PRESETS = {"ba2motifs": ba2motifs_spec, "bahousegrid": bahousegrid_spec}


def gen_ba(n: int, m: int, rng: np.random.Generator, label: int = 0) -> Graph:
    """Preferential-attachment graph on ``n`` nodes.

    The first ``m`` nodes form a clique; each later node attaches to ``m``
    distinct existing nodes drawn with probability proportional to current
    degree (uniformly while all degrees are zero). Connected, no self-loops,
    no duplicates; undirected edge count is C(m,2) + m*(n-m).
    """
    if not (n > m >= 1):
        raise DatasetSpecError(f"need n > m >= 1, got n={n}, m={m}")
    pairs: list[tuple[int, int]] = [
        (i, j) for i in range(m) for j in range(i + 1, m)
    ]
    degree = np.zeros(n)
    for i, j in pairs:
        degree[i] += 1
        degree[j] += 1
    for new in range(m, n):
        weights = degree[:new].copy()
        for _ in range(min(m, new)):
            total = weights.sum()
            if total > 0:
                # inverse-CDF draw proportional to degree
                r = rng.random() * total
                target = int(np.searchsorted(np.cumsum(weights), r, side="right"))
                target = min(target, new - 1)
            else:
                target = int(rng.integers(new))
            weights[target] = 0.0  # sample targets without replacement
            pairs.append((target, new))
            degree[target] += 1
            degree[new] += 1
    return graph_from_pairs(n, pairs, label)


def attach_motif(
    g: Graph,
    kind: str,
    rng: np.random.Generator,
    base_limit: Optional[int] = None,
) -> tuple[Graph, list[tuple[int, int]]]:
    """Append one motif to ``g`` and bridge it to a uniformly chosen base node.

    ``base_limit`` restricts candidate bridge targets to nodes below it
    (defaults to all current nodes). Returns the grown graph and the motif's
    internal undirected edges (the bridge is not ground truth).
    """
    if kind not in MOTIF_EDGES:
        raise DatasetSpecError(f"unknown motif kind {kind!r}")
    offset = g.num_nodes
    motif_pairs = [(i + offset, j + offset) for i, j in MOTIF_EDGES[kind]]
    motif_node = offset + int(rng.integers(MOTIF_NODES[kind]))
    base_node = int(rng.integers(base_limit if base_limit is not None else offset))
    p = pairing(g)
    old_pairs = [tuple(pq) for pq in p.pairs]
    old_uw = g.edge_weights[p.edges_of_pair[:, 0]]
    old_uf = g.edge_features[p.edges_of_pair[:, 0]]
    all_pairs = old_pairs + motif_pairs + [(base_node, motif_node)]
    # features/weights for the appended edges default to 1.0; keep originals
    key = {(min(i, j), max(i, j)): u for u, (i, j) in enumerate(old_pairs)}
    uniq = sorted({(min(i, j), max(i, j)) for i, j in all_pairs})
    uw = np.ones(len(uniq))
    uf = np.ones((len(uniq), g.d_e))
    for u, pq in enumerate(uniq):
        old = key.get(pq)
        if old is not None:
            uw[u] = old_uw[old]
            uf[u] = old_uf[old]
    nx = np.vstack([g.node_features, np.ones((MOTIF_NODES[kind], g.d_n))])
    grown = graph_from_pairs(
        offset + MOTIF_NODES[kind],
        uniq,
        g.label,
        node_features=nx,
        pair_features=uf,
        pair_weights=uw,
    )
    truth = [(min(i, j), max(i, j)) for i, j in motif_pairs]
    return grown, truth


def _truth_mask(g: Graph, truth_pairs: set[tuple[int, int]]) -> EdgeMask:
    p = pairing(g)
    uv = np.zeros(p.num_undirected)
    for u, (i, j) in enumerate(p.pairs):
        if (int(i), int(j)) in truth_pairs:
            uv[u] = 1.0
    out = np.empty(g.num_edges)
    out[p.edges_of_pair[:, 0]] = uv
    out[p.edges_of_pair[:, 1]] = uv
    return EdgeMask(out)


def build_graph(spec: DatasetSpec, index: int) -> tuple[Graph, EdgeMask]:
    """Generate graph ``index`` of the dataset (label = index mod 2).

    Seeded per graph as gen_seed XOR index, so graphs can be produced in any
    order or in parallel without changing the output.
    """
    label = index % 2
    rng = np.random.default_rng(spec.gen_seed ^ index)
    g = gen_ba(spec.base_nodes, spec.ba_attach, rng, label=label)
    lo, hi = spec.motifs_per_graph
    count = int(rng.integers(lo, hi + 1))
    kind = spec.motif_for_label(label)
    truth: set[tuple[int, int]] = set()
    for _ in range(count):
        g, t = attach_motif(g, kind, rng, base_limit=spec.base_nodes)
        truth.update(t)
    return g, _truth_mask(g, truth)


def build_dataset(spec: DatasetSpec) -> Dataset:
    """Generate the full dataset: balanced labels, 80/10/10 stratified split."""
    if spec.num_graphs % 2:
        raise DatasetSpecError(
            f"num_graphs={spec.num_graphs} is odd: exact class balance with two "
            f"labels is unsatisfiable"
        )
    if spec.num_classes != 2:
        raise DatasetSpecError("exactly two classes are supported")
    lo, hi = spec.motifs_per_graph
    if not (1 <= lo <= hi):
        raise DatasetSpecError(f"bad motif count range {spec.motifs_per_graph}")
    graphs: list[Graph] = []
    masks: list[EdgeMask] = []
    for i in range(spec.num_graphs):
        g, m = build_graph(spec, i)
        graphs.append(g)
        masks.append(m)
    splits = ["train"] * spec.num_graphs
    rng = np.random.default_rng(spec.split_seed)
    for label in (0, 1):
        idx = np.asarray([i for i, g in enumerate(graphs) if g.label == label])
        idx = idx[rng.permutation(idx.shape[0])]
        n = idx.shape[0]
        n_train, n_val = int(n * 0.8), int(n * 0.1)
        for i in idx[n_train:n_train + n_val]:
            splits[int(i)] = "validation"
        for i in idx[n_train + n_val:]:
            splits[int(i)] = "test"
    return Dataset(name=spec.name, graphs=graphs, splits=splits, truth_masks=masks)
