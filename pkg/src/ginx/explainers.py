"""Edge-importance estimators behind one registry interface.

Three base estimators (random / truth / inverse) and five model-based
methods (occlusion, saliency, integrated gradients, CAM-style, and a
learned soft mask). Every estimator returns a per-edge mask that is
symmetrized (max over the two directions) and min-max normalized per graph
(constant masks become all 0.5). Estimators never mutate the graph or the
model; weight-probing methods always evaluate the model through explicit
weight vectors so their before/after comparisons share one accumulation
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import (
    GnnModel,
    build_batch,
    edge_weight_grads,
    forward_batch,
    logit_grads_wrt_nodes,
    softmax,
)
from .errors import TrainingDivergedError, UnsupportedDatasetError
from .graphs import (
    Dataset,
    EdgeMask,
    Graph,
    mask_from_undirected,
    normalize_mask,
    pairing,
    symmetrize_mask,
    undirected_values,
)

EXPLAINER_NAMES = (
    "random",
    "truth",
    "inverse",
    "occlusion",
    "saliency",
    "integrated_gradients",
    "gradcam",
    "gnnexplainer",
)


@dataclass(frozen=True)
class ExplainerConfig:
    seed: int = 0
    ig_steps: int = 128
    gnnex_epochs: int = 100
    gnnex_lr: float = 0.01
    gnnex_size_coeff: float = 0.005
    gnnex_entropy_coeff: float = 1.0
    gnnex_init_std: float = 0.1

    def __post_init__(self):
        if self.ig_steps < 2:
            raise ValueError("ig_steps must be >= 2")
        if min(self.gnnex_size_coeff, self.gnnex_entropy_coeff) < 0:
            raise ValueError("coefficients must be >= 0")


def _predicted_class(model: GnnModel, g: Graph) -> int:
    batch = build_batch([g])
    cache = forward_batch(model, batch, weights=batch.weights)
    return int(cache.logits[0].argmax())


def explain_random(g: Graph, rng: np.random.Generator) -> EdgeMask:
    """Uniform [0,1) score per undirected edge."""
    uv = rng.random(pairing(g).num_undirected)
    return normalize_mask(mask_from_undirected(uv, g), g)


def explain_truth(g: Graph, truth_mask: Optional[EdgeMask]) -> EdgeMask:
    if truth_mask is None:
        raise UnsupportedDatasetError("truth estimator needs ground-truth masks")
    return normalize_mask(symmetrize_mask(truth_mask, g), g)


def explain_inverse(g: Graph, truth_mask: Optional[EdgeMask]) -> EdgeMask:
    """Worst case: 1 - ground truth per edge."""
    if truth_mask is None:
        raise UnsupportedDatasetError("inverse estimator needs ground-truth masks")
    uv = 1.0 - undirected_values(truth_mask, g)
    return normalize_mask(mask_from_undirected(uv, g), g)


def occlusion_scores(model: GnnModel, g: Graph, chunk: int = 64) -> np.ndarray:
    """Per undirected edge: p(yhat) minus p(yhat) with that edge's weight
    zeroed (both directions). Positive means the edge supported the
    prediction. Evaluated in batches of perturbed copies."""
    p = pairing(g)
    batch1 = build_batch([g])
    base = forward_batch(model, batch1, weights=batch1.weights)
    yhat = int(base.logits[0].argmax())
    p_base = float(softmax(base.logits)[0, yhat])
    n = p.num_undirected
    scores = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        count = stop - start
        batch = build_batch([g] * count)
        w = batch.weights.copy()
        for k, u in enumerate(range(start, stop)):
            offset = batch.edge_slices[k][0]
            w[offset + p.edges_of_pair[u, 0]] = 0.0
            w[offset + p.edges_of_pair[u, 1]] = 0.0
        probs = softmax(forward_batch(model, batch, weights=w).logits)
        scores[start:stop] = p_base - probs[:, yhat]
    return scores


def explain_occlusion(model: GnnModel, g: Graph) -> EdgeMask:
    return normalize_mask(mask_from_undirected(occlusion_scores(model, g), g), g)


def explain_saliency(model: GnnModel, g: Graph) -> EdgeMask:
    """|d logit_yhat / d w_e| at the graph's current weights."""
    yhat = _predicted_class(model, g)
    dw = edge_weight_grads(model, g, yhat, weights=g.edge_weights)
    mask = symmetrize_mask(EdgeMask(np.abs(dw)), g)
    return normalize_mask(mask, g)


def ig_attributions(
    model: GnnModel, g: Graph, steps: int, chunk: int = 32
) -> np.ndarray:
    """Signed path-integral attribution per directed edge.

    Right-endpoint Riemann approximation along the straight path from
    all-zero weights to the graph's weights:
    w_e * (1/steps) * sum_k d logit_yhat / d w_e at (k/steps) * w.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    w = g.edge_weights
    yhat = _predicted_class(model, g)
    grad_sum = np.zeros(g.num_edges)
    for start in range(1, steps + 1, chunk):
        alphas = [k / steps for k in range(start, min(start + chunk, steps + 1))]
        batch = build_batch([g] * len(alphas))
        wk = np.concatenate([a * w for a in alphas])
        cache = forward_batch(model, batch, weights=wk, keep_cache=True)
        dlogits = np.zeros((len(alphas), model.n_classes))
        dlogits[:, yhat] = 1.0
        from .engine import backward_batch

        _, dw = backward_batch(model, batch, cache, dlogits, need_edge_grads=True)
        for k in range(len(alphas)):
            lo, hi = batch.edge_slices[k]
            grad_sum += dw[lo:hi]
    return w * grad_sum / steps


def explain_integrated_gradients(
    model: GnnModel, g: Graph, steps: int = 128
) -> EdgeMask:
    attr = ig_attributions(model, g, steps)
    mask = symmetrize_mask(EdgeMask(np.abs(attr)), g)
    return normalize_mask(mask, g)


def gradcam_node_scores(model: GnnModel, g: Graph) -> np.ndarray:
    """relu(<d logit_yhat / d h_i, h_i>) on last-layer node states."""
    yhat = _predicted_class(model, g)
    h_last, dh = logit_grads_wrt_nodes(model, g, yhat)
    return np.maximum((dh * h_last).sum(axis=1), 0.0)


def explain_gradcam(model: GnnModel, g: Graph) -> EdgeMask:
    node_scores = gradcam_node_scores(model, g)
    p = pairing(g)
    uv = 0.5 * (node_scores[p.pairs[:, 0]] + node_scores[p.pairs[:, 1]])
    return normalize_mask(mask_from_undirected(uv, g), g)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def explain_gnnexplainer(
    model: GnnModel,
    g: Graph,
    cfg: ExplainerConfig = ExplainerConfig(),
    rng: Optional[np.random.Generator] = None,
) -> EdgeMask:
    """Learn a soft edge mask that keeps the model's prediction.

    Per undirected edge a logit m_u is optimized (Adam) to minimize
    cross-entropy of the prediction under weights w * sigmoid(m), plus a
    size penalty sum(sigmoid(m)) and an element-entropy penalty that pushes
    the mask toward binary values.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    p = pairing(g)
    n = p.num_undirected
    theta = rng.normal(0.0, cfg.gnnex_init_std, size=n)
    if n == 0 or cfg.gnnex_epochs == 0:
        return normalize_mask(mask_from_undirected(_sigmoid(theta), g), g)

    batch = build_batch([g])
    base = forward_batch(model, batch, weights=batch.weights)
    yhat = int(base.logits[0].argmax())
    w0 = g.edge_weights
    slot0, slot1 = p.edges_of_pair[:, 0], p.edges_of_pair[:, 1]

    m = np.zeros(n)
    v = np.zeros(n)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    from .engine import backward_batch, log_softmax

    for step in range(1, cfg.gnnex_epochs + 1):
        sig = _sigmoid(theta)
        w_eff = w0.copy()
        w_eff[slot0] = w0[slot0] * sig
        w_eff[slot1] = w0[slot1] * sig
        cache = forward_batch(model, batch, weights=w_eff, keep_cache=True)
        logp = log_softmax(cache.logits)[0]
        ce = -float(logp[yhat])
        sig_c = np.clip(sig, 1e-12, 1.0 - 1e-12)
        entropy = -(sig_c * np.log(sig_c) + (1 - sig_c) * np.log(1 - sig_c))
        loss = (ce + cfg.gnnex_size_coeff * sig.sum()
                + cfg.gnnex_entropy_coeff * entropy.sum())
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, f"mask optimization diverged at step {step}")
        dlogits = softmax(cache.logits)
        dlogits[0, yhat] -= 1.0
        _, dw = backward_batch(model, batch, cache, dlogits, need_edge_grads=True)
        dsig = dw[slot0] * w0[slot0] + dw[slot1] * w0[slot1]
        dsig += cfg.gnnex_size_coeff
        dsig += cfg.gnnex_entropy_coeff * np.log(sig_c / (1 - sig_c))
        dtheta = dsig * sig * (1 - sig)
        m = beta1 * m + (1 - beta1) * dtheta
        v = beta2 * v + (1 - beta2) * dtheta * dtheta
        theta -= cfg.gnnex_lr * (m / (1 - beta1 ** step)) / (
            np.sqrt(v / (1 - beta2 ** step)) + eps
        )
    return normalize_mask(mask_from_undirected(_sigmoid(theta), g), g)


def explain(
    name: str,
    model: Optional[GnnModel],
    g: Graph,
    truth_mask: Optional[EdgeMask] = None,
    cfg: ExplainerConfig = ExplainerConfig(),
    rng: Optional[np.random.Generator] = None,
) -> EdgeMask:
    """Single registry entry point: one graph -> one mask."""
    if name == "random":
        return explain_random(g, rng if rng is not None
                              else np.random.default_rng(cfg.seed))
    if name == "truth":
        return explain_truth(g, truth_mask)
    if name == "inverse":
        return explain_inverse(g, truth_mask)
    if model is None:
        raise ValueError(f"explainer {name!r} needs a model")
    if name == "occlusion":
        return explain_occlusion(model, g)
    if name == "saliency":
        return explain_saliency(model, g)
    if name == "integrated_gradients":
        return explain_integrated_gradients(model, g, steps=cfg.ig_steps)
    if name == "gradcam":
        return explain_gradcam(model, g)
    if name == "gnnexplainer":
        return explain_gnnexplainer(model, g, cfg, rng)
    raise ValueError(f"unknown explainer {name!r}; known: {EXPLAINER_NAMES}")


def explain_dataset(
    name: str,
    model: Optional[GnnModel],
    dataset: Dataset,
    cfg: ExplainerConfig = ExplainerConfig(),
) -> list[EdgeMask]:
    """Masks for every graph; stochastic estimators reseed per graph index."""
    if name in ("truth", "inverse") and dataset.truth_masks is None:
        raise UnsupportedDatasetError(
            f"{name} estimator needs a dataset with ground-truth masks"
        )
    out = []
    for i, g in enumerate(dataset.graphs):
        truth = dataset.truth_masks[i] if dataset.truth_masks is not None else None
        rng = np.random.default_rng((cfg.seed, i))
        out.append(explain(name, model, g, truth_mask=truth, cfg=cfg, rng=rng))
    return out
