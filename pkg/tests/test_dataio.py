from dataclasses import replace

import numpy as np
import pytest

from ginx.dataio import (
    dataset_text,
    load_dataset,
    load_masks,
    save_dataset,
    save_masks,
)
from ginx.errors import DatasetParseError, FormatVersionError
from ginx.graphs import Dataset, EdgeMask, datasets_equal, graph_from_pairs
from ginx.removal import soft_remove
from ginx.synth import ba2motifs_spec, build_dataset


@pytest.fixture(scope="module")
def small_dataset():
    return build_dataset(replace(ba2motifs_spec(), num_graphs=20))


def test_round_trip_identity(tmp_path, small_dataset):
    path = str(tmp_path / "d.gds")
    save_dataset(small_dataset, path)
    loaded = load_dataset(path)
    assert datasets_equal(small_dataset, loaded)


def test_round_trip_with_nonunit_weights(tmp_path, small_dataset):
    # soft-degraded graphs carry zero weights; they must survive the file
    masks = small_dataset.truth_masks
    graphs = [
        soft_remove(g, m, 0.3, np.random.default_rng(i))
        for i, (g, m) in enumerate(zip(small_dataset.graphs, masks))
    ]
    degraded = Dataset("soft", graphs, list(small_dataset.splits), None)
    path = str(tmp_path / "soft.gds")
    save_dataset(degraded, path)
    assert datasets_equal(degraded, load_dataset(path))


def test_missing_truth_section_loads_without_masks(tmp_path, small_dataset):
    bare = Dataset(
        small_dataset.name, small_dataset.graphs, list(small_dataset.splits), None
    )
    path = str(tmp_path / "bare.gds")
    save_dataset(bare, path)
    loaded = load_dataset(path)
    assert loaded.truth_masks is None


def test_out_of_range_edge_is_parse_error(tmp_path):
    g = graph_from_pairs(5, [(0, 1), (1, 2)], label=0)
    d = Dataset("bad", [g], ["train"], None)
    text = dataset_text(d).replace("e 0 1 1 2", "e 0 1 1 10")
    path = tmp_path / "bad.gds"
    path.write_text(text)
    with pytest.raises(DatasetParseError, match=r"graph 0.*10"):
        load_dataset(str(path))


def test_version_mismatch(tmp_path, small_dataset):
    path = tmp_path / "v2.gds"
    path.write_text(dataset_text(small_dataset).replace("ginx-dataset v1", "ginx-dataset v2", 1))
    with pytest.raises(FormatVersionError):
        load_dataset(str(path))


def test_truncated_file_names_graph(tmp_path, small_dataset):
    text = dataset_text(small_dataset)
    lines = text.splitlines()
    path = tmp_path / "trunc.gds"
    path.write_text("\n".join(lines[: len(lines) // 2]))
    with pytest.raises(DatasetParseError):
        load_dataset(str(path))


def test_mixed_truth_presence_rejected(tmp_path, small_dataset):
    text = dataset_text(small_dataset)
    lines = text.splitlines()
    drop = next(i for i, l in enumerate(lines) if l.startswith("t "))
    path = tmp_path / "mixed.gds"
    path.write_text("\n".join(lines[:drop] + lines[drop + 1:]))
    with pytest.raises(DatasetParseError, match="truth mask missing"):
        load_dataset(str(path))


def test_mask_file_round_trip(tmp_path, small_dataset):
    rng = np.random.default_rng(0)
    masks = [
        EdgeMask(np.repeat(np.round(rng.random(g.num_edges // 2), 6), 2))
        for g in small_dataset.graphs
    ]
    path = str(tmp_path / "m.gmk")
    save_masks(path, small_dataset, masks, "random", "cfg" * 8, "ds" * 8)
    meta, loaded = load_masks(path, small_dataset)
    assert meta["explainer"] == "random"
    assert meta["config_hash"] == "cfg" * 8
    for a, b in zip(masks, loaded):
        assert np.array_equal(a.values, b.values)


def test_mask_file_wrong_dataset_length(tmp_path, small_dataset):
    masks = [EdgeMask(np.zeros(g.num_edges)) for g in small_dataset.graphs]
    path = str(tmp_path / "m.gmk")
    save_masks(path, small_dataset, masks, "truth", "c", "d")
    smaller = Dataset(
        "sub", small_dataset.graphs[:3], list(small_dataset.splits[:3]), None
    )
    with pytest.raises(DatasetParseError, match="masks"):
        load_masks(path, smaller)
