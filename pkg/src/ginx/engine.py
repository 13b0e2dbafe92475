"""Edge-weight-aware message-passing classifier with exact gradients.

The model is three message-passing layers followed by per-dimension max
pooling and an affine head. One layer updates node states as

    h_i <- MLP( h_i + sum_{j in N(i)} relu(h_j + scale * w_ij + shift) )

where ``w_ij`` is the scalar edge weight and (scale, shift) is the layer's
affine weight transform. The MLP is Linear -> relu -> Linear with hidden
width H. Everything is float64 numpy; the backward pass is written by hand
and returns exact reverse-mode derivatives with respect to all parameters
and, on request, all edge weights.

Two execution paths compute the same math:

* uniform path - when no weight override is given and every stored weight is
  1.0, the per-edge message relu(h_j + scale + shift) depends only on the
  source node, so aggregation is one sparse adjacency matmul and no
  edge-sized temporaries exist. Training and hard-removal evaluation live
  here.
* general path - arbitrary weights; per-edge messages are materialized and
  summed through sparse incidence matmuls. Explainers that probe weights
  always pass them explicitly, so their before/after comparisons stay on
  this one path.

Within a path, every reduction (message sums, pooling, batch means) runs in
a fixed node/edge order, so repeated runs are bit-identical. Across paths,
results agree to float-addition reordering (~1e-12).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .graphs import Graph

PARAM_KINDS = ("edge_scale", "edge_shift", "w1", "b1", "w2", "b2")


@dataclass
class GnnModel:
    """Parameter container; ``params`` maps canonical names to arrays."""

    hidden: int
    d_n: int
    d_e: int
    n_layers: int = 3
    n_classes: int = 2
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def layer_in_dim(self, layer: int) -> int:
        return self.d_n if layer == 0 else self.hidden

    def param_order(self) -> list[str]:
        names = []
        for l in range(self.n_layers):
            names.extend(f"layer{l}.{kind}" for kind in PARAM_KINDS)
        names.extend(["head.w", "head.b"])
        return names

    def copy(self) -> "GnnModel":
        return GnnModel(
            hidden=self.hidden,
            d_n=self.d_n,
            d_e=self.d_e,
            n_layers=self.n_layers,
            n_classes=self.n_classes,
            params={k: v.copy() for k, v in self.params.items()},
        )

    def num_params(self) -> int:
        return sum(v.size for v in self.params.values())


def param_shapes(model: GnnModel) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    h = model.hidden
    for l in range(model.n_layers):
        d = model.layer_in_dim(l)
        shapes[f"layer{l}.edge_scale"] = (d,)
        shapes[f"layer{l}.edge_shift"] = (d,)
        shapes[f"layer{l}.w1"] = (d, h)
        shapes[f"layer{l}.b1"] = (h,)
        shapes[f"layer{l}.w2"] = (h, h)
        shapes[f"layer{l}.b2"] = (h,)
    shapes["head.w"] = (h, model.n_classes)
    shapes["head.b"] = (model.n_classes,)
    return shapes


def init_model(
    hidden: int,
    d_n: int,
    d_e: int,
    rng: np.random.Generator,
    n_layers: int = 3,
    n_classes: int = 2,
) -> GnnModel:
    """Fresh model: MLP weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).

    Edge transforms start at zero so the initial model matches an unweighted
    one at w = 1; the classifier head starts at zero so initial outputs are
    exactly uniform (degree-heavy aggregation otherwise yields huge logits).
    """
    model = GnnModel(hidden=hidden, d_n=d_n, d_e=d_e,
                     n_layers=n_layers, n_classes=n_classes)
    fan_in = {"w1": lambda d: d, "b1": lambda d: d,
              "w2": lambda d: hidden, "b2": lambda d: hidden}
    for name, shape in param_shapes(model).items():
        kind = name.split(".")[1]
        if kind in ("edge_scale", "edge_shift") or name.startswith("head."):
            model.params[name] = np.zeros(shape)
        else:
            layer = int(name.split(".")[0][len("layer"):])
            bound = 1.0 / np.sqrt(fan_in[kind](model.layer_in_dim(layer)))
            model.params[name] = rng.uniform(-bound, bound, size=shape)
    return model


@dataclass
class GraphBatch:
    """Disjoint union of graphs with precomputed sparse operators."""

    x: np.ndarray              # (N, d_n)
    src: np.ndarray            # (E,)
    dst: np.ndarray            # (E,)
    weights: np.ndarray        # (E,)
    labels: np.ndarray         # (B,)
    graph_of_node: np.ndarray  # (N,)
    node_starts: np.ndarray    # (B,) first node of each graph
    edge_slices: list[tuple[int, int]]  # per graph [start, stop) in edge arrays
    adj: sp.csr_matrix         # (N, N): row dst, col src
    adj_t: sp.csr_matrix       # (N, N): row src, col dst
    inc_dst: sp.csr_matrix     # (N, E): groups edges by dst
    inc_src: sp.csr_matrix     # (N, E): groups edges by src
    uniform_weights: bool

    @property
    def n_graphs(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])


def build_batch(graphs: Sequence[Graph]) -> GraphBatch:
    if not graphs:
        raise ValueError("cannot batch zero graphs")
    n_nodes = [g.num_nodes for g in graphs]
    node_off = np.concatenate([[0], np.cumsum(n_nodes)[:-1]]).astype(np.int64)
    total_nodes = int(sum(n_nodes))
    x = np.vstack([g.node_features for g in graphs])
    srcs, dsts, ws = [], [], []
    edge_slices = []
    pos = 0
    for g, off in zip(graphs, node_off):
        srcs.append(g.edges[:, 0] + off)
        dsts.append(g.edges[:, 1] + off)
        ws.append(g.edge_weights)
        edge_slices.append((pos, pos + g.num_edges))
        pos += g.num_edges
    src = np.concatenate(srcs) if srcs else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.zeros(0, dtype=np.int64)
    weights = np.concatenate(ws) if ws else np.zeros(0)
    n_edges = src.shape[0]
    ones = np.ones(n_edges)
    eidx = np.arange(n_edges)
    adj = sp.csr_matrix((ones, (dst, src)), shape=(total_nodes, total_nodes))
    adj_t = sp.csr_matrix((ones, (src, dst)), shape=(total_nodes, total_nodes))
    inc_dst = sp.csr_matrix((ones, (dst, eidx)), shape=(total_nodes, n_edges))
    inc_src = sp.csr_matrix((ones, (src, eidx)), shape=(total_nodes, n_edges))
    return GraphBatch(
        x=x,
        src=src,
        dst=dst,
        weights=weights,
        labels=np.asarray([g.label for g in graphs], dtype=np.int64),
        graph_of_node=np.repeat(np.arange(len(graphs)), n_nodes),
        node_starts=node_off,
        edge_slices=edge_slices,
        adj=adj,
        adj_t=adj_t,
        inc_dst=inc_dst,
        inc_src=inc_src,
        uniform_weights=bool(np.all(weights == 1.0)),
    )


@dataclass
class ForwardCache:
    path: str                # "uniform" or "general"
    weights: np.ndarray
    layers: list[tuple]      # uniform: (h_in, m, s, z); general: (h_in, msg, s, z)
    h_out: np.ndarray        # (N, H) final node states
    readout: np.ndarray      # (B, H)
    logits: np.ndarray       # (B, C)


def forward_batch(
    model: GnnModel,
    batch: GraphBatch,
    weights: Optional[np.ndarray] = None,
    keep_cache: bool = False,
) -> ForwardCache:
    """Run the model over a batch, optionally overriding edge weights.

    An explicit ``weights`` argument always takes the general path, even if
    the values are all ones, so that callers comparing perturbed weights
    against a baseline stay on one accumulation order.
    """
    p = model.params
    uniform = weights is None and batch.uniform_weights
    w = batch.weights if weights is None else np.asarray(weights, dtype=np.float64)
    h = batch.x
    layers = []
    for l in range(model.n_layers):
        scale = p[f"layer{l}.edge_scale"]
        shift = p[f"layer{l}.edge_shift"]
        if uniform:
            m = np.maximum(h + (scale + shift), 0.0)
            s = h + batch.adj @ m
            extras = m
        else:
            pre = h[batch.src] + (np.multiply.outer(w, scale) + shift)
            msg = np.maximum(pre, 0.0, out=pre)
            s = h + batch.inc_dst @ msg
            extras = msg
        z = np.maximum(s @ p[f"layer{l}.w1"] + p[f"layer{l}.b1"], 0.0)
        h_new = z @ p[f"layer{l}.w2"] + p[f"layer{l}.b2"]
        if keep_cache:
            layers.append((h, extras, s, z))
        h = h_new
    readout = np.maximum.reduceat(h, batch.node_starts, axis=0)
    logits = readout @ p["head.w"] + p["head.b"]
    return ForwardCache(path="uniform" if uniform else "general",
                        weights=w, layers=layers, h_out=h,
                        readout=readout, logits=logits)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def backward_batch(
    model: GnnModel,
    batch: GraphBatch,
    cache: ForwardCache,
    dlogits: np.ndarray,
    need_edge_grads: bool = False,
) -> tuple[dict[str, np.ndarray], Optional[np.ndarray]]:
    """Exact reverse-mode pass seeded with d(scalar)/d(logits).

    Max pooling splits its subgradient evenly across exactly-tied argmax
    nodes; that choice is deterministic and symmetric, and coincides with
    the true derivative wherever the maximum is unique.
    """
    p = model.params
    grads: dict[str, np.ndarray] = {}
    w = cache.weights
    uniform = cache.path == "uniform"
    if need_edge_grads and uniform:
        raise ValueError("edge-weight gradients require the general path")

    grads["head.w"] = cache.readout.T @ dlogits
    grads["head.b"] = dlogits.sum(axis=0)
    dr = dlogits @ p["head.w"].T

    r_per_node = cache.readout[batch.graph_of_node]
    tie = cache.h_out == r_per_node
    counts = np.add.reduceat(tie.astype(np.float64), batch.node_starts, axis=0)
    dh = tie * (dr / counts)[batch.graph_of_node]

    dw_edges = np.zeros(batch.n_edges) if need_edge_grads else None
    for l in reversed(range(model.n_layers)):
        h_in, extras, s, z = cache.layers[l]
        grads[f"layer{l}.w2"] = z.T @ dh
        grads[f"layer{l}.b2"] = dh.sum(axis=0)
        dz = dh @ p[f"layer{l}.w2"].T
        dz *= z > 0
        grads[f"layer{l}.w1"] = s.T @ dz
        grads[f"layer{l}.b1"] = dz.sum(axis=0)
        ds = dz @ p[f"layer{l}.w1"].T
        if uniform:
            dm = (batch.adj_t @ ds) * (extras > 0)
            total = dm.sum(axis=0)
            grads[f"layer{l}.edge_scale"] = total
            grads[f"layer{l}.edge_shift"] = total.copy()
            dh = ds + dm
        else:
            dmsg = ds[batch.dst] * (extras > 0)
            grads[f"layer{l}.edge_scale"] = dmsg.T @ w
            grads[f"layer{l}.edge_shift"] = dmsg.sum(axis=0)
            if need_edge_grads:
                dw_edges += dmsg @ p[f"layer{l}.edge_scale"]
            dh = ds + batch.inc_src @ dmsg
    return grads, dw_edges


def batch_nll(model: GnnModel, batch: GraphBatch,
              weights: Optional[np.ndarray] = None) -> float:
    """Mean cross-entropy of the batch under the model."""
    cache = forward_batch(model, batch, weights=weights)
    logp = log_softmax(cache.logits)
    return float(-logp[np.arange(batch.n_graphs), batch.labels].mean())


def loss_and_param_grads(
    model: GnnModel, graphs: Sequence[Graph]
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over ``graphs`` and its exact parameter gradients."""
    if not graphs:
        raise ValueError("empty batch")
    batch = build_batch(graphs)
    loss, grads, _ = loss_and_grads_on_batch(model, batch)
    return loss, grads


def loss_and_grads_on_batch(
    model: GnnModel,
    batch: GraphBatch,
    weights: Optional[np.ndarray] = None,
    need_edge_grads: bool = False,
) -> tuple[float, dict[str, np.ndarray], Optional[np.ndarray]]:
    cache = forward_batch(model, batch, weights=weights, keep_cache=True)
    logp = log_softmax(cache.logits)
    idx = np.arange(batch.n_graphs)
    loss = float(-logp[idx, batch.labels].mean())
    dlogits = softmax(cache.logits)
    dlogits[idx, batch.labels] -= 1.0
    dlogits /= batch.n_graphs
    grads, dw = backward_batch(model, batch, cache, dlogits,
                               need_edge_grads=need_edge_grads)
    return loss, grads, dw


def forward(model: GnnModel, g: Graph,
            weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Class probabilities for a single graph."""
    if g.d_n != model.d_n:
        raise ValueError(
            f"graph has {g.d_n} node features, model expects {model.d_n}"
        )
    cache = forward_batch(model, build_batch([g]), weights=weights)
    return softmax(cache.logits)[0]


def predict_probs(
    model: GnnModel, graphs: Sequence[Graph], chunk: int = 256
) -> np.ndarray:
    """Probabilities for many graphs, evaluated in fixed-size chunks."""
    out = np.empty((len(graphs), model.n_classes))
    for start in range(0, len(graphs), chunk):
        part = graphs[start:start + chunk]
        cache = forward_batch(model, build_batch(part))
        out[start:start + len(part)] = softmax(cache.logits)
    return out


def readout_embedding(model: GnnModel, g: Graph) -> np.ndarray:
    """Post-max-pooling, pre-classifier graph vector (width H)."""
    cache = forward_batch(model, build_batch([g]))
    return cache.readout[0].copy()


def edge_weight_grads(model: GnnModel, g: Graph, target_class: int,
                      weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Exact d(logit_c)/d(w_e) for every directed edge of ``g``."""
    batch = build_batch([g])
    w = batch.weights if weights is None else weights
    cache = forward_batch(model, batch, weights=w, keep_cache=True)
    dlogits = np.zeros((1, model.n_classes))
    dlogits[0, target_class] = 1.0
    _, dw = backward_batch(model, batch, cache, dlogits, need_edge_grads=True)
    return dw


def logit_grads_wrt_nodes(
    model: GnnModel, g: Graph, target_class: int
) -> tuple[np.ndarray, np.ndarray]:
    """Last-layer node states and d(logit_c)/d(those states).

    With max pooling, only per-dimension argmax nodes receive gradient;
    exact ties share it evenly.
    """
    batch = build_batch([g])
    cache = forward_batch(model, batch, keep_cache=True)
    p = model.params
    dlogits = np.zeros((1, model.n_classes))
    dlogits[0, target_class] = 1.0
    dr = dlogits @ p["head.w"].T
    tie = cache.h_out == cache.readout[batch.graph_of_node]
    counts = np.add.reduceat(tie.astype(np.float64), batch.node_starts, axis=0)
    dh = tie * (dr / counts)[batch.graph_of_node]
    return cache.h_out, dh
