"""Finite-difference oracles for the hand-written backward pass.

Graphs here carry random node features: with constant features, structurally
isomorphic nodes tie exactly in the max readout, where no subgradient can
match central differences (the even split used by the engine is still the
symmetric choice). Random features put the model in generic position.
"""

import numpy as np
import pytest

from ginx.engine import (
    build_batch,
    batch_nll,
    edge_weight_grads,
    forward_batch,
    init_model,
    loss_and_grads_on_batch,
)
from ginx.graphs import graph_from_pairs

from conftest import random_graph


def randomized_model(hidden, seed, spread=0.5):
    rng = np.random.default_rng(seed)
    model = init_model(hidden, 1, 1, rng)
    for k in model.params:
        model.params[k] = rng.uniform(-spread, spread, model.params[k].shape)
    return model


def rel_err(analytic, fd, gmax):
    return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-2 * gmax)


class TestParameterGradients:
    @pytest.mark.parametrize("use_general_path", [False, True])
    def test_against_central_differences(self, use_general_path):
        rng = np.random.default_rng(100)
        graphs = [random_graph(rng, random_features=True) for _ in range(2)]
        model = randomized_model(6, seed=1)
        batch = build_batch(graphs)
        weights = batch.weights.copy() if use_general_path else None
        _, grads, _ = loss_and_grads_on_batch(model, batch, weights=weights)
        gmax = max(np.abs(v).max() for v in grads.values())
        checked = 0
        for name in model.param_order():
            flat = model.params[name].reshape(-1)
            for i in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                orig = flat[i]
                flat[i] = orig + 1e-4
                lp = batch_nll(model, batch, weights=weights)
                flat[i] = orig - 1e-4
                lm = batch_nll(model, batch, weights=weights)
                flat[i] = orig
                fd = (lp - lm) / 2e-4
                analytic = grads[name].reshape(-1)[i]
                assert rel_err(analytic, fd, gmax) <= 1e-4, (name, i)
                checked += 1
        assert checked >= 50


class TestEdgeWeightGradients:
    def test_against_central_differences(self):
        rng = np.random.default_rng(200)
        model = randomized_model(6, seed=2)
        checked = 0
        for trial in range(5):
            g = random_graph(rng, n_lo=8, n_hi=14, random_features=True)
            w = g.edge_weights.copy()
            batch = build_batch([g])
            c = int(forward_batch(model, batch, weights=w).logits[0].argmax())
            dw = edge_weight_grads(model, g, c, weights=w)
            gmax = np.abs(dw).max()
            idx = rng.choice(len(w), size=min(20, len(w)), replace=False)
            for e in idx:
                wp, wm = w.copy(), w.copy()
                wp[e] += 1e-4
                wm[e] -= 1e-4
                fd = (
                    forward_batch(model, batch, weights=wp).logits[0, c]
                    - forward_batch(model, batch, weights=wm).logits[0, c]
                ) / 2e-4
                assert rel_err(dw[e], fd, gmax) <= 1e-4, (trial, e)
                checked += 1
        assert checked >= 100

    def test_cycle_automorphism_maps_gradients(self):
        # every directed edge of C5 with identical features is equivalent
        g = graph_from_pairs(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)], label=0)
        model = randomized_model(6, seed=3)
        dw = edge_weight_grads(model, g, 0, weights=g.edge_weights)
        np.testing.assert_allclose(dw, dw[0], atol=1e-12)

    def test_unreached_component_gets_zero_gradient(self):
        # component B never wins any readout max (all-positive params, small
        # features), so its edge cannot influence the logits
        pairs = [(0, 1), (1, 2), (0, 2), (3, 4)]
        x = np.array([[5.0], [5.0], [5.0], [0.01], [0.01]])
        g = graph_from_pairs(5, pairs, label=0, node_features=x)
        model = randomized_model(6, seed=4)
        for k, v in model.params.items():
            model.params[k] = np.abs(v) + 0.05
        dw = edge_weight_grads(model, g, 0, weights=g.edge_weights)
        b_slots = [e for e in range(g.num_edges)
                   if g.edges[e, 0] in (3, 4) and g.edges[e, 1] in (3, 4)]
        assert len(b_slots) == 2
        assert np.all(dw[b_slots] == 0.0)
        assert np.abs(dw).max() > 0.0
