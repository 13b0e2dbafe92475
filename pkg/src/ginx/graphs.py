"""Graphs, edge masks, datasets, and the mask algebra shared by every module.

Conventions used throughout the package:

* A graph stores every undirected edge as two directed entries. The two
  directions carry identical edge features and identical edge weights.
* The "canonical layout" interleaves the directions: undirected pair ``u``
  (with endpoints ``i < j``, pairs sorted lexicographically) occupies directed
  slots ``2u`` (``i -> j``) and ``2u + 1`` (``j -> i``). Generators, the file
  loader, and the removal operations all produce this layout; arbitrary
  symmetric layouts are still accepted by every operation via `pairing`.
* All fractions (sparsification budgets, sparsity, thresholds) count
  undirected edges: a directed pair is one unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    EmptyMaskError,
    InvalidFractionError,
    MaskAlignmentError,
)

SPLITS = ("train", "validation", "test")


@dataclass(frozen=True, eq=False)
class Graph:
    """A labelled graph with per-edge weights.

    ``edges`` is an ``(E, 2)`` int array of directed pairs; ``edge_weights``
    lives in ``[0, 1]`` with default 1.0. Arrays are frozen after construction
    so graphs can be shared freely across workers.
    """

    num_nodes: int
    edges: np.ndarray
    node_features: np.ndarray
    edge_features: np.ndarray
    edge_weights: np.ndarray
    label: int

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("a graph needs at least one node")
        edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        x = np.ascontiguousarray(self.node_features, dtype=np.float64)
        ef = np.ascontiguousarray(self.edge_features, dtype=np.float64)
        w = np.ascontiguousarray(self.edge_weights, dtype=np.float64).reshape(-1)
        if x.ndim != 2 or x.shape[0] != self.num_nodes:
            raise ValueError(
                f"node_features must be (num_nodes, d_n), got {x.shape} for "
                f"{self.num_nodes} nodes"
            )
        if ef.ndim != 2 or ef.shape[0] != edges.shape[0]:
            raise ValueError(
                f"edge_features must be (num_edges, d_e), got {ef.shape} for "
                f"{edges.shape[0]} directed edges"
            )
        if w.shape[0] != edges.shape[0]:
            raise ValueError("edge_weights length must match the edge list")
        for arr, name in ((edges, "edges"), (x, "node_features"),
                          (ef, "edge_features"), (w, "edge_weights")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_pairing", None)

    @property
    def num_edges(self) -> int:
        """Directed edge count."""
        return int(self.edges.shape[0])

    @property
    def d_n(self) -> int:
        return int(self.node_features.shape[1])

    @property
    def d_e(self) -> int:
        return int(self.edge_features.shape[1])


@dataclass(frozen=True)
class EdgePairing:
    """Mapping between a graph's directed edges and its undirected pairs."""

    pair_of_edge: np.ndarray   # (E,) undirected index of each directed edge
    pairs: np.ndarray          # (Eu, 2), endpoints with i < j, first-occurrence order
    edges_of_pair: np.ndarray  # (Eu, 2), the two directed slots of each pair

    @property
    def num_undirected(self) -> int:
        return int(self.pairs.shape[0])


def pairing(g: Graph) -> EdgePairing:
    """Return (and cache) the undirected pairing of ``g``'s edge list.

    Requires the symmetry invariant: every directed edge has its reverse
    stored exactly once. Violations surface as MaskAlignmentError here;
    use `validate_graph` for a full diagnostic.
    """
    cached = getattr(g, "_pairing", None)
    if cached is not None:
        return cached
    e = g.edges
    seen: dict[tuple[int, int], int] = {}
    pair_of_edge = np.empty(e.shape[0], dtype=np.int64)
    pairs: list[tuple[int, int]] = []
    slots: list[list[int]] = []
    for idx in range(e.shape[0]):
        i, j = int(e[idx, 0]), int(e[idx, 1])
        key = (i, j) if i <= j else (j, i)
        u = seen.get(key)
        if u is None:
            u = len(pairs)
            seen[key] = u
            pairs.append(key)
            slots.append([idx])
        else:
            slots[u].append(idx)
        pair_of_edge[idx] = u
    bad = [u for u, s in enumerate(slots) if len(s) != 2]
    if bad:
        u = bad[0]
        raise MaskAlignmentError(
            f"edge list is not a set of symmetric pairs: undirected edge "
            f"{pairs[u]} appears in {len(slots[u])} directed slot(s)"
        )
    result = EdgePairing(
        pair_of_edge=pair_of_edge,
        pairs=np.asarray(pairs, dtype=np.int64).reshape(-1, 2),
        edges_of_pair=np.asarray(slots, dtype=np.int64).reshape(-1, 2),
    )
    result.pair_of_edge.setflags(write=False)
    result.pairs.setflags(write=False)
    result.edges_of_pair.setflags(write=False)
    object.__setattr__(g, "_pairing", result)
    return result


def graph_from_pairs(
    num_nodes: int,
    pairs: Iterable[tuple[int, int]],
    label: int,
    node_features: Optional[np.ndarray] = None,
    pair_features: Optional[np.ndarray] = None,
    pair_weights: Optional[np.ndarray] = None,
    d_n: int = 1,
    d_e: int = 1,
) -> Graph:
    """Build a canonical-layout graph from undirected pairs.

    Pairs are deduplicated, normalized to ``i < j`` and sorted; each expands
    to the two directed slots ``2u``/``2u+1``. Features default to constant
    1.0, weights to 1.0. ``pair_features``/``pair_weights`` must follow the
    *sorted* pair order.
    """
    uniq = sorted({(min(i, j), max(i, j)) for i, j in pairs})
    if any(i == j for i, j in uniq):
        raise ValueError("self-loops are not representable as undirected pairs")
    eu = len(uniq)
    edges = np.empty((2 * eu, 2), dtype=np.int64)
    for u, (i, j) in enumerate(uniq):
        edges[2 * u] = (i, j)
        edges[2 * u + 1] = (j, i)
    if node_features is None:
        node_features = np.ones((num_nodes, d_n))
    if pair_features is None:
        pair_features = np.ones((eu, d_e))
    pair_features = np.asarray(pair_features, dtype=np.float64)
    if pair_features.ndim == 1:
        pair_features = pair_features.reshape(eu, 1) if eu else pair_features.reshape(0, d_e)
    edge_features = np.repeat(pair_features, 2, axis=0)
    if pair_weights is None:
        pair_weights = np.ones(eu)
    edge_weights = np.repeat(np.asarray(pair_weights, dtype=np.float64), 2)
    return Graph(
        num_nodes=num_nodes,
        edges=edges,
        node_features=node_features,
        edge_features=edge_features,
        edge_weights=edge_weights,
        label=label,
    )


def is_canonical_layout(g: Graph) -> bool:
    """True iff the edge list follows the interleaved sorted-pair layout."""
    e = g.edges
    if e.shape[0] % 2:
        return False
    fwd = e[0::2]
    rev = e[1::2]
    if not np.array_equal(fwd[:, ::-1], rev):
        return False
    if fwd.shape[0] and not np.all(fwd[:, 0] < fwd[:, 1]):
        return False
    order = np.lexsort((fwd[:, 1], fwd[:, 0]))
    return bool(np.array_equal(order, np.arange(fwd.shape[0])))


def validate_graph(g: Graph) -> list[str]:
    """Check every Graph invariant; return one message per violation.

    An empty list means the graph is well-formed. Purely diagnostic: never
    raises for content problems.
    """
    report: list[str] = []
    e = g.edges
    n, num_e = g.num_nodes, e.shape[0]

    out_of_range = np.where((e < 0) | (e >= n))
    for idx in np.unique(out_of_range[0]):
        report.append(
            f"edge {int(idx)} ({int(e[idx, 0])},{int(e[idx, 1])}): endpoint out "
            f"of range for num_nodes={n}"
        )
    loops = np.where(e[:, 0] == e[:, 1])[0]
    for idx in loops:
        report.append(f"edge {int(idx)}: self-loop at node {int(e[idx, 0])}")

    seen: dict[tuple[int, int], int] = {}
    for idx in range(num_e):
        key = (int(e[idx, 0]), int(e[idx, 1]))
        if key in seen:
            report.append(
                f"edge {int(idx)} {key}: duplicate of edge {seen[key]}"
            )
        else:
            seen[key] = idx
    for (i, j), idx in seen.items():
        if i == j:
            continue
        ridx = seen.get((j, i))
        if ridx is None:
            report.append(f"edge {idx} ({i},{j}): reverse direction not stored")
            continue
        if not np.array_equal(g.edge_features[idx], g.edge_features[ridx]):
            report.append(f"edge {idx} ({i},{j}): edge_features differ from reverse")
        if g.edge_weights[idx] != g.edge_weights[ridx]:
            report.append(f"edge {idx} ({i},{j}): edge_weights differ from reverse")

    w = g.edge_weights
    bad_w = np.where(~np.isfinite(w) | (w < 0.0) | (w > 1.0))[0]
    for idx in bad_w:
        report.append(f"edge {int(idx)}: weight {w[idx]!r} outside [0,1]")
    if not np.all(np.isfinite(g.node_features)):
        report.append("node_features contain non-finite values")
    if not np.all(np.isfinite(g.edge_features)):
        report.append("edge_features contain non-finite values")
    return report


@dataclass(frozen=True, eq=False)
class EdgeMask:
    """Per-directed-edge importance scores aligned to one graph's edge list."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.shape[0])


def _check_aligned(mask: EdgeMask, g: Graph) -> EdgePairing:
    if len(mask) != g.num_edges:
        raise MaskAlignmentError(
            f"mask has {len(mask)} values for a graph with {g.num_edges} "
            f"directed edges"
        )
    return pairing(g)


def undirected_values(mask: EdgeMask, g: Graph) -> np.ndarray:
    """Per-undirected-edge value: max over the two directed slots."""
    p = _check_aligned(mask, g)
    if p.num_undirected == 0:
        return np.zeros(0)
    return np.maximum(
        mask.values[p.edges_of_pair[:, 0]], mask.values[p.edges_of_pair[:, 1]]
    )


def mask_from_undirected(uvalues: np.ndarray, g: Graph) -> EdgeMask:
    """Expand per-pair values onto both directed slots."""
    p = pairing(g)
    uvalues = np.asarray(uvalues, dtype=np.float64).reshape(-1)
    if uvalues.shape[0] != p.num_undirected:
        raise MaskAlignmentError(
            f"{uvalues.shape[0]} undirected values for {p.num_undirected} pairs"
        )
    out = np.empty(g.num_edges)
    out[p.edges_of_pair[:, 0]] = uvalues
    out[p.edges_of_pair[:, 1]] = uvalues
    return EdgeMask(out)


def symmetrize_mask(mask: EdgeMask, g: Graph) -> EdgeMask:
    """Give both directions of each pair the max of their two values."""
    return mask_from_undirected(undirected_values(mask, g), g)


def normalize_mask(mask: EdgeMask, g: Graph) -> EdgeMask:
    """Min-max normalize per graph onto [0,1]; a constant mask becomes all 0.5."""
    uv = undirected_values(mask, g)
    if uv.size == 0:
        return mask_from_undirected(uv, g)
    lo, hi = float(uv.min()), float(uv.max())
    if hi == lo:
        return mask_from_undirected(np.full(uv.shape, 0.5), g)
    return mask_from_undirected((uv - lo) / (hi - lo), g)


def edge_budget(t: float, num_undirected: int) -> int:
    """Number of undirected edges a fraction ``t`` selects: ceil(t * Eu).

    Guarded so float noise cannot push an exact product over the next
    integer, and so any t > 0 selects at least one edge.
    """
    if not (0.0 <= t <= 1.0) or not math.isfinite(t):
        raise InvalidFractionError(f"fraction t={t!r} outside [0, 1]")
    if t == 0.0 or num_undirected == 0:
        return 0
    return min(num_undirected, max(1, math.ceil(t * num_undirected - 1e-9)))


def top_edges(mask: EdgeMask, g: Graph, k: int) -> np.ndarray:
    """Indices of the k highest-valued undirected edges.

    Ties break toward the lowest undirected-edge index, so selection is
    deterministic across runs.
    """
    uv = undirected_values(mask, g)
    order = np.lexsort((np.arange(uv.shape[0]), -uv))
    return order[:k]


def sparsify_mask(mask: EdgeMask, g: Graph, t: float) -> EdgeMask:
    """Keep the top ceil(t*Eu) undirected edges' values; zero the rest."""
    p = _check_aligned(mask, g)
    k = edge_budget(t, p.num_undirected)
    uv = undirected_values(mask, g)
    keep = top_edges(mask, g, k)
    out = np.zeros_like(uv)
    out[keep] = uv[keep]
    return mask_from_undirected(out, g)


def mask_sparsity(mask: EdgeMask, g: Graph) -> float:
    """Fraction of undirected edges whose value is exactly zero."""
    uv = undirected_values(mask, g)
    if uv.size == 0:
        raise EmptyMaskError("sparsity is undefined for a graph with no edges")
    return float(np.count_nonzero(uv == 0.0)) / uv.size


def nonzero_fraction(mask: EdgeMask, g: Graph) -> float:
    """Complement of `mask_sparsity`: the method's critical-threshold unit."""
    return 1.0 - mask_sparsity(mask, g)


@dataclass
class Dataset:
    """A split collection of graphs, optionally with ground-truth masks."""

    name: str
    graphs: list[Graph]
    splits: list[str]
    truth_masks: Optional[list[EdgeMask]] = None

    def __post_init__(self):
        if len(self.splits) != len(self.graphs):
            raise ValueError("one split tag per graph required")
        bad = [s for s in self.splits if s not in SPLITS]
        if bad:
            raise ValueError(f"unknown split tag(s): {sorted(set(bad))}")
        if self.truth_masks is not None and len(self.truth_masks) != len(self.graphs):
            raise ValueError("one truth mask per graph required when present")

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def d_n(self) -> int:
        return self.graphs[0].d_n

    @property
    def d_e(self) -> int:
        return self.graphs[0].d_e

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.splits) if s == split]

    def subset(self, split: str) -> list[Graph]:
        return [self.graphs[i] for i in self.indices(split)]

    def labels(self) -> np.ndarray:
        return np.asarray([g.label for g in self.graphs], dtype=np.int64)


def validate_dataset(d: Dataset) -> list[str]:
    """Dataset-level diagnostic: per-graph invariants plus cross-graph ones."""
    report: list[str] = []
    if not d.graphs:
        return ["dataset has no graphs"]
    d_n, d_e = d.graphs[0].d_n, d.graphs[0].d_e
    for gi, g in enumerate(d.graphs):
        for msg in validate_graph(g):
            report.append(f"graph {gi}: {msg}")
        if g.d_n != d_n or g.d_e != d_e:
            report.append(
                f"graph {gi}: feature dims ({g.d_n},{g.d_e}) differ from "
                f"dataset dims ({d_n},{d_e})"
            )
    if d.truth_masks is not None:
        for gi, (g, m) in enumerate(zip(d.graphs, d.truth_masks)):
            if len(m) != g.num_edges:
                report.append(
                    f"graph {gi}: truth mask length {len(m)} != {g.num_edges} edges"
                )
    return report


def permute_nodes(g: Graph, perm: Sequence[int]) -> Graph:
    """Relabel nodes by ``perm`` (new index of old node i is perm[i]).

    Edge order is re-canonicalized; used by invariance tests.
    """
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(g.num_nodes)):
        raise ValueError("perm must be a permutation of range(num_nodes)")
    p = pairing(g)
    new_pairs = perm[p.pairs]
    order_key = np.sort(new_pairs, axis=1)
    order = np.lexsort((order_key[:, 1], order_key[:, 0]))
    inv = np.empty_like(perm)
    inv[perm] = np.arange(g.num_nodes)
    uw = g.edge_weights[p.edges_of_pair[:, 0]]
    uf = g.edge_features[p.edges_of_pair[:, 0]]
    return graph_from_pairs(
        g.num_nodes,
        [tuple(order_key[u]) for u in order],
        g.label,
        node_features=g.node_features[inv],
        pair_features=uf[order],
        pair_weights=uw[order],
    )


def graphs_equal(a: Graph, b: Graph) -> bool:
    return (
        a.num_nodes == b.num_nodes
        and a.label == b.label
        and np.array_equal(a.edges, b.edges)
        and np.array_equal(a.node_features, b.node_features)
        and np.array_equal(a.edge_features, b.edge_features)
        and np.array_equal(a.edge_weights, b.edge_weights)
    )


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    if a.name != b.name or a.splits != b.splits or len(a) != len(b):
        return False
    if (a.truth_masks is None) != (b.truth_masks is None):
        return False
    if not all(graphs_equal(x, y) for x, y in zip(a.graphs, b.graphs)):
        return False
    if a.truth_masks is not None:
        return all(
            np.array_equal(x.values, y.values)
            for x, y in zip(a.truth_masks, b.truth_masks)
        )
    return True
