import os

# Must happen before numpy first loads (ginx.__init__ does the same for the
# CLI path): two OpenBLAS pools spinning on a small box dwarf the compute.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

from dataclasses import replace

import pytest

from ginx.synth import bahousegrid_spec, ba2motifs_spec, build_dataset
from ginx.training import TrainConfig, pretrain


@pytest.fixture(scope="session")
def mini_housegrid():
    """200-graph variant of the house/grid dataset (full-size bases)."""
    return build_dataset(replace(bahousegrid_spec(), num_graphs=200))


@pytest.fixture(scope="session")
def mini_2motifs():
    return build_dataset(replace(ba2motifs_spec(), num_graphs=200))


@pytest.fixture(scope="session")
def mini_cfg():
    return TrainConfig(max_epochs=200, patience=40, seeds=(0, 1))


@pytest.fixture(scope="session")
def housegrid_model(mini_housegrid, mini_cfg):
    """Model trained on the mini house/grid set; near-perfect test accuracy."""
    model, hist = pretrain(mini_housegrid, mini_cfg, hidden=16, seed=0)
    assert hist.test_accuracy is not None and hist.test_accuracy >= 0.9
    return model


@pytest.fixture(scope="session")
def motifs_model(mini_2motifs, mini_cfg):
    model, hist = pretrain(mini_2motifs, mini_cfg, hidden=16, seed=0)
    assert hist.test_accuracy is not None and hist.test_accuracy >= 0.85
    return model


def random_graph(rng, n_lo=4, n_hi=12, d_n=1, random_features=False, label=None):
    """Connected random graph in canonical layout (test helper)."""
    from ginx.graphs import graph_from_pairs

    n = int(rng.integers(n_lo, n_hi + 1))
    pairs = {(i - 1, i) for i in range(1, n)}  # spanning path keeps it connected
    extra = int(rng.integers(0, max(1, n)))
    for _ in range(extra):
        i, j = rng.integers(0, n, size=2)
        if i != j:
            pairs.add((min(i, j), max(i, j)))
    features = (
        rng.uniform(0.5, 1.5, size=(n, d_n)) if random_features else None
    )
    lab = int(rng.integers(0, 2)) if label is None else label
    return graph_from_pairs(n, sorted(pairs), lab, node_features=features, d_n=d_n)
