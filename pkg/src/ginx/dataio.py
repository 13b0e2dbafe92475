"""Line-delimited text formats for datasets and explanation masks.

Dataset file (``.gds``)::

    ginx-dataset v1
    name <identifier>
    d_n <int>
    d_e <int>
    graphs <count>
    graph <index> <label> <split> <num_nodes> <num_undirected_edges>
    e <i> <j> [<i> <j> ...]        undirected pairs, i<j, lexicographic order
    x <real> ...                   node features, row-major, num_nodes*d_n
    f <real> ...                   per-pair edge features, row-major, Eu*d_e
    w <real> ...                   optional per-pair weights; omitted when all 1
    t [<pair-index>:<real> ...]    optional truth mask, nonzero entries only

Integers are base-10; reals carry 9 significant digits. Directed storage is
reconstructed canonically (pair u -> directed slots 2u and 2u+1), so load
after save is field-for-field identity. The truth line must be present for
every graph or for none.

Mask file (``.gmk``)::

    ginx-masks v1
    explainer <name>
    config_hash <hex>
    dataset_hash <hex>
    graphs <count>
    g <index> <num_undirected_edges> [<pair-index>:<real> ...]
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from typing import Iterable, Optional

import numpy as np

from .errors import DatasetParseError, FormatVersionError
from .graphs import (
    SPLITS,
    Dataset,
    EdgeMask,
    Graph,
    graph_from_pairs,
    is_canonical_layout,
    mask_from_undirected,
    pairing,
    undirected_values,
)

DATASET_MAGIC = "ginx-dataset"
MASKS_MAGIC = "ginx-masks"
FORMAT_VERSION = "v1"


def fmt_real(x: float) -> str:
    """9-significant-digit rendering used by every text artifact."""
    return f"{x:.9g}"


def fmt_reals(xs: Iterable[float]) -> str:
    return " ".join(fmt_real(float(x)) for x in xs)


def atomic_write_text(path: str, text: str) -> None:
    """Write via a sibling temp file + rename so readers never see partials."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def dataset_text(d: Dataset) -> str:
    lines = [
        f"{DATASET_MAGIC} {FORMAT_VERSION}",
        f"name {d.name}",
        f"d_n {d.d_n}",
        f"d_e {d.d_e}",
        f"graphs {len(d)}",
    ]
    for gi, g in enumerate(d.graphs):
        if not is_canonical_layout(g):
            raise DatasetParseError(
                f"graph {gi}: edge list is not in canonical layout; "
                f"cannot serialize undirected pairs faithfully"
            )
        p = pairing(g)
        lines.append(
            f"graph {gi} {g.label} {d.splits[gi]} {g.num_nodes} {p.num_undirected}"
        )
        lines.append(("e " + " ".join(
            f"{int(i)} {int(j)}" for i, j in p.pairs)).rstrip())
        lines.append(("x " + fmt_reals(g.node_features.ravel())).rstrip())
        uf = g.edge_features[p.edges_of_pair[:, 0]]
        lines.append(("f " + fmt_reals(uf.ravel())).rstrip())
        uw = g.edge_weights[p.edges_of_pair[:, 0]]
        if np.any(uw != 1.0):
            lines.append("w " + fmt_reals(uw))
        if d.truth_masks is not None:
            uv = undirected_values(d.truth_masks[gi], g)
            nz = np.nonzero(uv)[0]
            entries = " ".join(f"{int(u)}:{fmt_real(uv[u])}" for u in nz)
            lines.append(("t " + entries).rstrip())
    return "\n".join(lines) + "\n"


def save_dataset(d: Dataset, path: str) -> None:
    atomic_write_text(path, dataset_text(d))


class _Lines:
    """Cursor over file lines with positional error reporting."""

    def __init__(self, text: str, path: str):
        self.lines = text.splitlines()
        self.pos = 0
        self.path = path

    def next(self, context: str) -> str:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise DatasetParseError(
                f"{self.path}: unexpected end of file while reading {context}"
            )
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def peek(self) -> Optional[str]:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        return self.lines[self.pos] if self.pos < len(self.lines) else None


def _header_field(cur: _Lines, key: str) -> str:
    line = cur.next(f"header field '{key}'")
    parts = line.split(maxsplit=1)
    if len(parts) != 2 or parts[0] != key:
        raise DatasetParseError(
            f"{cur.path}: expected header line '{key} <value>', got {line!r}"
        )
    return parts[1]


def _parse_reals(tokens: list[str], expected: int, where: str, path: str) -> np.ndarray:
    if len(tokens) != expected:
        raise DatasetParseError(
            f"{path}: {where}: expected {expected} values, got {len(tokens)}"
        )
    try:
        return np.asarray([float(tok) for tok in tokens], dtype=np.float64)
    except ValueError as exc:
        raise DatasetParseError(f"{path}: {where}: {exc}") from exc


def load_dataset(path: str) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    cur = _Lines(text, path)
    magic = cur.next("magic line").split()
    if not magic or magic[0] != DATASET_MAGIC:
        raise DatasetParseError(f"{path}: not a dataset file (bad magic line)")
    if len(magic) != 2 or magic[1] != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: unsupported dataset format version "
            f"{magic[1] if len(magic) > 1 else '<missing>'} (expected {FORMAT_VERSION})"
        )
    name = _header_field(cur, "name")
    try:
        d_n = int(_header_field(cur, "d_n"))
        d_e = int(_header_field(cur, "d_e"))
        count = int(_header_field(cur, "graphs"))
    except ValueError as exc:
        raise DatasetParseError(f"{path}: bad header integer: {exc}") from exc
    if d_n < 1 or d_e < 1 or count < 0:
        raise DatasetParseError(f"{path}: header dims/count out of range")

    graphs: list[Graph] = []
    splits: list[str] = []
    truth: list[Optional[EdgeMask]] = []
    for gi in range(count):
        where = f"graph {gi}"
        head = cur.next(where).split()
        if len(head) != 6 or head[0] != "graph":
            raise DatasetParseError(f"{path}: {where}: malformed graph line {head!r}")
        try:
            idx, label, n, eu = int(head[1]), int(head[2]), int(head[4]), int(head[5])
        except ValueError as exc:
            raise DatasetParseError(f"{path}: {where}: {exc}") from exc
        split = head[3]
        if idx != gi:
            raise DatasetParseError(
                f"{path}: {where}: index {idx} out of order (expected {gi})"
            )
        if split not in SPLITS:
            raise DatasetParseError(f"{path}: {where}: unknown split tag {split!r}")
        if n < 1 or eu < 0:
            raise DatasetParseError(f"{path}: {where}: bad node/edge counts")

        etoks = cur.next(f"{where} edge list").split()
        if etoks[:1] != ["e"]:
            raise DatasetParseError(f"{path}: {where}: expected 'e' line")
        if len(etoks) - 1 != 2 * eu:
            raise DatasetParseError(
                f"{path}: {where}: expected {2 * eu} edge endpoints, got {len(etoks) - 1}"
            )
        try:
            flat = [int(tok) for tok in etoks[1:]]
        except ValueError as exc:
            raise DatasetParseError(f"{path}: {where}: {exc}") from exc
        pairs = [(flat[2 * u], flat[2 * u + 1]) for u in range(eu)]
        for i, j in pairs:
            if not (0 <= i < n) or not (0 <= j < n):
                raise DatasetParseError(
                    f"{path}: {where}: edge ({i},{j}) references a node outside "
                    f"0..{n - 1}"
                )
            if i == j:
                raise DatasetParseError(f"{path}: {where}: self-loop at node {i}")
            if i > j:
                raise DatasetParseError(
                    f"{path}: {where}: edge ({i},{j}) not stored with i < j"
                )

        xtoks = cur.next(f"{where} node features").split()
        if xtoks[:1] != ["x"]:
            raise DatasetParseError(f"{path}: {where}: expected 'x' line")
        x = _parse_reals(xtoks[1:], n * d_n, f"{where} node features", path)
        ftoks = cur.next(f"{where} edge features").split()
        if ftoks[:1] != ["f"]:
            raise DatasetParseError(f"{path}: {where}: expected 'f' line")
        f = _parse_reals(ftoks[1:], eu * d_e, f"{where} edge features", path)

        uw = None
        nxt = cur.peek()
        if nxt is not None and nxt.split()[:1] == ["w"]:
            wtoks = cur.next(f"{where} weights").split()
            uw = _parse_reals(wtoks[1:], eu, f"{where} weights", path)
        t_mask = None
        nxt = cur.peek()
        if nxt is not None and nxt.split()[:1] == ["t"]:
            ttoks = cur.next(f"{where} truth mask").split()[1:]
            uv = np.zeros(eu)
            for tok in ttoks:
                try:
                    u_str, v_str = tok.split(":")
                    u, v = int(u_str), float(v_str)
                except ValueError as exc:
                    raise DatasetParseError(
                        f"{path}: {where}: bad truth entry {tok!r}"
                    ) from exc
                if not (0 <= u < eu):
                    raise DatasetParseError(
                        f"{path}: {where}: truth entry references pair {u} of {eu}"
                    )
                uv[u] = v
            t_mask = uv

        g = graph_from_pairs(
            n,
            pairs,
            label,
            node_features=x.reshape(n, d_n),
            pair_features=f.reshape(eu, d_e),
            pair_weights=uw,
            d_n=d_n,
            d_e=d_e,
        )
        if pairing(g).num_undirected != eu:
            raise DatasetParseError(f"{path}: {where}: duplicate undirected edges")
        graphs.append(g)
        splits.append(split)
        truth.append(mask_from_undirected(t_mask, g) if t_mask is not None else None)

    if cur.peek() is not None:
        raise DatasetParseError(
            f"{path}: trailing content after graph {count - 1}: {cur.peek()!r}"
        )
    have_truth = [m is not None for m in truth]
    if any(have_truth) and not all(have_truth):
        first = have_truth.index(False)
        raise DatasetParseError(
            f"{path}: graph {first}: truth mask missing while other graphs have one"
        )
    return Dataset(
        name=name,
        graphs=graphs,
        splits=splits,
        truth_masks=list(truth) if all(have_truth) and truth else None,
    )


def masks_text(
    dataset: Dataset,
    masks: list[EdgeMask],
    explainer: str,
    config_hash: str,
    dataset_hash: str,
) -> str:
    if len(masks) != len(dataset):
        raise DatasetParseError(
            f"{len(masks)} masks for a dataset of {len(dataset)} graphs"
        )
    lines = [
        f"{MASKS_MAGIC} {FORMAT_VERSION}",
        f"explainer {explainer}",
        f"config_hash {config_hash}",
        f"dataset_hash {dataset_hash}",
        f"graphs {len(masks)}",
    ]
    for gi, (g, m) in enumerate(zip(dataset.graphs, masks)):
        uv = undirected_values(m, g)
        nz = np.nonzero(uv)[0]
        entries = " ".join(f"{int(u)}:{fmt_real(uv[u])}" for u in nz)
        lines.append(f"g {gi} {uv.shape[0]} {entries}".rstrip())
    return "\n".join(lines) + "\n"


def save_masks(
    path: str,
    dataset: Dataset,
    masks: list[EdgeMask],
    explainer: str,
    config_hash: str,
    dataset_hash: str,
) -> None:
    atomic_write_text(
        path, masks_text(dataset, masks, explainer, config_hash, dataset_hash)
    )


def load_masks(path: str, dataset: Dataset) -> tuple[dict, list[EdgeMask]]:
    """Read a mask file and expand it against ``dataset``'s edge lists."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    cur = _Lines(text, path)
    magic = cur.next("magic line").split()
    if not magic or magic[0] != MASKS_MAGIC:
        raise DatasetParseError(f"{path}: not a mask file (bad magic line)")
    if len(magic) != 2 or magic[1] != FORMAT_VERSION:
        raise FormatVersionError(
            f"{path}: unsupported mask format version "
            f"{magic[1] if len(magic) > 1 else '<missing>'} (expected {FORMAT_VERSION})"
        )
    meta = {
        "explainer": _header_field(cur, "explainer"),
        "config_hash": _header_field(cur, "config_hash"),
        "dataset_hash": _header_field(cur, "dataset_hash"),
    }
    count = int(_header_field(cur, "graphs"))
    if count != len(dataset):
        raise DatasetParseError(
            f"{path}: file has {count} masks, dataset has {len(dataset)} graphs"
        )
    masks: list[EdgeMask] = []
    for gi in range(count):
        where = f"mask {gi}"
        toks = cur.next(where).split()
        if toks[:1] != ["g"] or len(toks) < 3:
            raise DatasetParseError(f"{path}: {where}: malformed 'g' line")
        try:
            idx, eu = int(toks[1]), int(toks[2])
        except ValueError as exc:
            raise DatasetParseError(f"{path}: {where}: {exc}") from exc
        if idx != gi:
            raise DatasetParseError(f"{path}: {where}: index {idx} out of order")
        g = dataset.graphs[gi]
        actual = pairing(g).num_undirected
        if eu != actual:
            raise DatasetParseError(
                f"{path}: {where}: {eu} undirected edges recorded, graph has {actual}"
            )
        uv = np.zeros(eu)
        for tok in toks[3:]:
            try:
                u_str, v_str = tok.split(":")
                u, v = int(u_str), float(v_str)
            except ValueError as exc:
                raise DatasetParseError(
                    f"{path}: {where}: bad entry {tok!r}"
                ) from exc
            if not (0 <= u < eu):
                raise DatasetParseError(
                    f"{path}: {where}: entry references pair {u} of {eu}"
                )
            uv[u] = v
        masks.append(mask_from_undirected(uv, g))
    return meta, masks
