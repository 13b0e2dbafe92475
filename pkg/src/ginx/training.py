"""Training, fine-tuning, evaluation, and checkpoint I/O for the classifier.

The loop is Adam (beta1=0.9, beta2=0.999, eps=1e-8) on mean cross-entropy,
up to ``max_epochs`` with early stopping on validation loss: an epoch counts
as an improvement only when the loss drops by more than ``min_delta``, and
``patience`` non-improving epochs end the run. The returned parameters come
from the best validation epoch. Fine-tuning is the identical loop started
from the given parameters instead of a fresh init.

Batch composition is fixed once per run from the seed; only the batch order
is reshuffled each epoch, which keeps every reduction order deterministic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataio import atomic_write_bytes
from .engine import (
    GnnModel,
    GraphBatch,
    build_batch,
    forward_batch,
    init_model,
    log_softmax,
    loss_and_grads_on_batch,
)
from .errors import CheckpointError, TrainingDivergedError
from .graphs import Dataset, Graph

CHECKPOINT_MAGIC = "ginx-checkpoint"
CHECKPOINT_VERSION = "v1"


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 200
    patience: int = 30
    batch_size: int = 32
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    min_delta: float = 1e-4
    eval_chunk: int = 256

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.patience < self.max_epochs):
            raise ValueError("need 0 < patience < max_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed required")


@dataclass
class TrainHistory:
    seed: int
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    chosen_epoch: int = 0
    test_accuracy: Optional[float] = None

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / bc1) / (
                np.sqrt(self.v[k] / bc2) + self.eps
            )


def _eval_batches(model: GnnModel, batches: list[GraphBatch]) -> tuple[float, float]:
    """(mean NLL, accuracy) over pre-built evaluation batches."""
    total_nll = 0.0
    correct = 0
    count = 0
    for batch in batches:
        cache = forward_batch(model, batch)
        logp = log_softmax(cache.logits)
        idx = np.arange(batch.n_graphs)
        total_nll += float(-logp[idx, batch.labels].sum())
        correct += int((cache.logits.argmax(axis=1) == batch.labels).sum())
        count += batch.n_graphs
    return total_nll / count, correct / count


def _chunked_batches(graphs: Sequence[Graph], chunk: int) -> list[GraphBatch]:
    return [
        build_batch(graphs[i:i + chunk]) for i in range(0, len(graphs), chunk)
    ]


def train(
    model: GnnModel,
    dataset: Dataset,
    cfg: TrainConfig,
    seed: Optional[int] = None,
) -> tuple[GnnModel, TrainHistory]:
    """Train (or fine-tune) starting from ``model``'s current parameters."""
    seed = cfg.seeds[0] if seed is None else seed
    train_graphs = dataset.subset("train")
    val_graphs = dataset.subset("validation")
    if not train_graphs or not val_graphs:
        raise ValueError("dataset needs nonempty train and validation splits")

    rng = np.random.default_rng((seed, 1))
    model = model.copy()
    order = rng.permutation(len(train_graphs))
    batches = [
        build_batch([train_graphs[i] for i in order[pos:pos + cfg.batch_size]])
        for pos in range(0, len(train_graphs), cfg.batch_size)
    ]
    sizes = np.asarray([b.n_graphs for b in batches], dtype=np.float64)
    val_batches = _chunked_batches(val_graphs, cfg.eval_chunk)

    optimizer = _Adam(model.params, cfg.learning_rate)
    history = TrainHistory(seed=seed)
    best_loss = np.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    best_epoch = 0
    stale = 0
    for epoch in range(cfg.max_epochs):
        losses = np.zeros(len(batches))
        for b in rng.permutation(len(batches)):
            loss, grads, _ = loss_and_grads_on_batch(model, batches[b])
            losses[b] = loss
            optimizer.step(model.params, grads)
        train_loss = float((losses * sizes).sum() / sizes.sum())
        val_loss, val_acc = _eval_batches(model, val_batches)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(val_acc)
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingDivergedError(epoch)
        if val_loss < best_loss - cfg.min_delta:
            best_loss = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.params = best_params
    history.chosen_epoch = best_epoch
    if dataset.indices("test"):
        history.test_accuracy = test_accuracy(model, dataset, "test",
                                              chunk=cfg.eval_chunk)
    return model, history


def fine_tune(
    model: GnnModel,
    dataset: Dataset,
    cfg: TrainConfig,
    seed: Optional[int] = None,
) -> tuple[GnnModel, TrainHistory]:
    """Same loop as `train`, explicitly named for the degraded-dataset pass."""
    return train(model, dataset, cfg, seed=seed)


def pretrain(
    dataset: Dataset,
    cfg: TrainConfig,
    hidden: int = 32,
    seed: Optional[int] = None,
) -> tuple[GnnModel, TrainHistory]:
    """Fresh init + train; the init rng is derived from the same seed."""
    seed = cfg.seeds[0] if seed is None else seed
    rng = np.random.default_rng((seed, 0))
    model = init_model(hidden, dataset.d_n, dataset.d_e, rng)
    return train(model, dataset, cfg, seed=seed)


def test_accuracy(
    model: GnnModel, dataset: Dataset, split: str = "test", chunk: int = 256
) -> float:
    """Fraction of the split whose argmax prediction matches the label."""
    graphs = dataset.subset(split)
    if not graphs:
        raise ValueError(f"split {split!r} is empty")
    correct = 0
    for batch in _chunked_batches(graphs, chunk):
        cache = forward_batch(model, batch)
        correct += int((cache.logits.argmax(axis=1) == batch.labels).sum())
    return correct / len(graphs)


def save_checkpoint(model: GnnModel, path: str) -> None:
    """Header line + float64 little-endian parameter blocks in canonical order."""
    header = (
        f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} hidden={model.hidden} "
        f"d_n={model.d_n} d_e={model.d_e} layers={model.n_layers} "
        f"classes={model.n_classes}\n"
    )
    blocks = [header.encode("ascii")]
    for name in model.param_order():
        blocks.append(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    atomic_write_bytes(path, b"".join(blocks))


_HEADER_RE = re.compile(
    rf"^{CHECKPOINT_MAGIC} (?P<version>\S+) hidden=(?P<hidden>\d+) "
    rf"d_n=(?P<d_n>\d+) d_e=(?P<d_e>\d+) layers=(?P<layers>\d+) "
    rf"classes=(?P<classes>\d+)$"
)


def load_checkpoint(path: str, require: Optional[dict[str, int]] = None) -> GnnModel:
    """Load a checkpoint; ``require`` enforces expected hyperparameters.

    A mismatch raises CheckpointError naming declared vs expected values;
    truncated or oversized files raise without returning a partial model.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    newline = data.find(b"\n")
    if newline < 0:
        raise CheckpointError(f"{path}: missing checkpoint header")
    try:
        header = data[:newline].decode("ascii")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    match = _HEADER_RE.match(header)
    if not match:
        raise CheckpointError(f"{path}: malformed header {header!r}")
    if match["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {match['version']} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    declared = {k: int(match[k]) for k in ("hidden", "d_n", "d_e", "layers", "classes")}
    if require:
        for key, expected in require.items():
            if declared.get(key) != expected:
                raise CheckpointError(
                    f"{path}: checkpoint declares {key}={declared.get(key)}, "
                    f"caller expects {key}={expected}"
                )
    model = GnnModel(
        hidden=declared["hidden"],
        d_n=declared["d_n"],
        d_e=declared["d_e"],
        n_layers=declared["layers"],
        n_classes=declared["classes"],
    )
    from .engine import param_shapes

    offset = newline + 1
    payload = data[offset:]
    pos = 0
    shapes = param_shapes(model)
    for name in model.param_order():
        shape = shapes[name]
        nbytes = int(np.prod(shape)) * 8
        block = payload[pos:pos + nbytes]
        if len(block) != nbytes:
            raise CheckpointError(
                f"{path}: truncated parameter block {name!r} "
                f"({len(block)} of {nbytes} bytes)"
            )
        model.params[name] = np.frombuffer(block, dtype="<f8").reshape(shape).copy()
        pos += nbytes
    if pos != len(payload):
        raise CheckpointError(
            f"{path}: {len(payload) - pos} unexpected trailing bytes"
        )
    return model
