"""Run configuration: one JSON file drives every pipeline stage.

Unknown keys, wrong types, and out-of-range values raise ConfigError with
the offending field path. Defaults are materialized on load, so the copy
written next to the artifacts describes the run completely. The config hash
covers everything that can change results; output location and worker count
are excluded (worker count must not change results by contract).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from .errors import ConfigError
from .explainers import EXPLAINER_NAMES, ExplainerConfig
from .metrics import Truncation
from .pipeline import DEFAULT_THRESHOLDS
from .removal import MODES
from .synth import PRESETS, DatasetSpec
from .training import TrainConfig


@dataclass
class DataConfig:
    preset: Optional[str] = None
    path: Optional[str] = None
    num_graphs: Optional[int] = None
    base_nodes: Optional[int] = None
    ba_attach: Optional[int] = None
    motifs_per_graph: Optional[tuple[int, int]] = None
    gen_seed: int = 0
    split_seed: int = 1

    def spec(self) -> DatasetSpec:
        if self.preset is None:
            raise ConfigError("dataset.preset: required to generate data")
        base = PRESETS[self.preset](gen_seed=self.gen_seed,
                                    split_seed=self.split_seed)
        overrides = {}
        for key in ("num_graphs", "base_nodes", "ba_attach", "motifs_per_graph"):
            value = getattr(self, key)
            if value is not None:
                overrides[key] = value
        if overrides:
            from dataclasses import replace

            base = replace(base, **overrides)
        return base


@dataclass
class ExplainerEntry:
    name: str
    config: ExplainerConfig = field(default_factory=ExplainerConfig)


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    hidden: int = 32
    train: TrainConfig = field(default_factory=TrainConfig)
    explainers: list[ExplainerEntry] = field(
        default_factory=lambda: [
            ExplainerEntry("truth"),
            ExplainerEntry("inverse"),
            ExplainerEntry("random"),
        ]
    )
    modes: list[str] = field(default_factory=lambda: ["hard"])
    thresholds: list[float] = field(
        default_factory=lambda: [float(t) for t in DEFAULT_THRESHOLDS]
    )
    finetune: bool = True
    fidelity_truncation: Truncation = field(default_factory=Truncation)
    manual_optimal_threshold: Optional[float] = None
    workers: int = 1
    out: Optional[str] = None

    def to_dict(self) -> dict:
        """Resolved config in the JSON schema shape (round-trips through
        `config_from_dict`)."""
        data = {k: v for k, v in asdict(self.data).items() if v is not None}
        if self.data.motifs_per_graph is not None:
            data["motifs_per_graph"] = list(self.data.motifs_per_graph)
        train = asdict(self.train)
        train["seeds"] = list(self.train.seeds)
        return {
            "dataset": data,
            "model": {"hidden": self.hidden},
            "train": train,
            "explainers": [
                {"name": e.name, **asdict(e.config)} for e in self.explainers
            ],
            "modes": list(self.modes),
            "thresholds": list(self.thresholds),
            "finetune": self.finetune,
            "fidelity_truncation": {
                "kind": self.fidelity_truncation.kind,
                "value": self.fidelity_truncation.value,
            },
            "manual_optimal_threshold": self.manual_optimal_threshold,
            "workers": self.workers,
            "out": self.out,
        }

    def hash(self) -> str:
        payload = self.to_dict()
        # excluded: output location and worker count never change results;
        # the finetune toggle only selects which (distinctly named)
        # artifacts get written, and one run dir holds both views
        payload.pop("out", None)
        payload.pop("workers", None)
        payload.pop("finetune", None)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def explainer_names(self) -> list[str]:
        return [e.name for e in self.explainers]


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _take(raw: dict, path: str, allowed: set[str]) -> None:
    unknown = set(raw) - allowed
    _require(not unknown, path, f"unknown field(s) {sorted(unknown)}")


def _build_data(raw: Any, path: str) -> DataConfig:
    _require(isinstance(raw, dict), path, "must be an object")
    _take(raw, path, {"preset", "path", "num_graphs", "base_nodes", "ba_attach",
                      "motifs_per_graph", "gen_seed", "split_seed"})
    out = DataConfig()
    if "preset" in raw:
        _require(raw["preset"] in PRESETS, f"{path}.preset",
                 f"must be one of {sorted(PRESETS)}")
        out.preset = raw["preset"]
    if "path" in raw:
        _require(isinstance(raw["path"], str), f"{path}.path", "must be a string")
        out.path = raw["path"]
    _require(out.preset is not None or out.path is not None, path,
             "either preset or path is required")
    for key in ("num_graphs", "base_nodes", "ba_attach"):
        if raw.get(key) is not None:
            _require(isinstance(raw[key], int) and raw[key] > 0,
                     f"{path}.{key}", "must be a positive integer")
            setattr(out, key, raw[key])
    if raw.get("motifs_per_graph") is not None:
        v = raw["motifs_per_graph"]
        _require(
            isinstance(v, (list, tuple)) and len(v) == 2
            and all(isinstance(x, int) and x >= 1 for x in v) and v[0] <= v[1],
            f"{path}.motifs_per_graph", "must be [lo, hi] with 1 <= lo <= hi",
        )
        out.motifs_per_graph = (v[0], v[1])
    for key in ("gen_seed", "split_seed"):
        if key in raw:
            _require(isinstance(raw[key], int) and raw[key] >= 0,
                     f"{path}.{key}", "must be a nonnegative integer")
            setattr(out, key, raw[key])
    return out


def _build_train(raw: Any, path: str) -> TrainConfig:
    _require(isinstance(raw, dict), path, "must be an object")
    _take(raw, path, {"learning_rate", "max_epochs", "patience", "batch_size",
                      "seeds", "min_delta", "eval_chunk"})
    kwargs = {}
    for key, typ, check, desc in (
        ("learning_rate", (int, float), lambda v: v > 0, "must be > 0"),
        ("max_epochs", int, lambda v: v >= 2, "must be >= 2"),
        ("patience", int, lambda v: v >= 1, "must be >= 1"),
        ("batch_size", int, lambda v: v >= 1, "must be >= 1"),
        ("min_delta", (int, float), lambda v: v >= 0, "must be >= 0"),
        ("eval_chunk", int, lambda v: v >= 1, "must be >= 1"),
    ):
        if key in raw:
            _require(isinstance(raw[key], typ) and not isinstance(raw[key], bool)
                     and check(raw[key]), f"{path}.{key}", desc)
            kwargs[key] = raw[key]
    if "seeds" in raw:
        v = raw["seeds"]
        _require(isinstance(v, list) and v
                 and all(isinstance(s, int) for s in v),
                 f"{path}.seeds", "must be a nonempty list of integers")
        kwargs["seeds"] = tuple(v)
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _build_explainers(raw: Any, path: str) -> list[ExplainerEntry]:
    _require(isinstance(raw, list) and raw, path, "must be a nonempty list")
    out = []
    for i, entry in enumerate(raw):
        epath = f"{path}[{i}]"
        _require(isinstance(entry, dict), epath, "must be an object")
        _take(entry, epath, {"name", "seed", "ig_steps", "gnnex_epochs",
                             "gnnex_lr", "gnnex_size_coeff",
                             "gnnex_entropy_coeff", "gnnex_init_std"})
        _require("name" in entry, epath, "missing 'name'")
        _require(entry["name"] in EXPLAINER_NAMES, f"{epath}.name",
                 f"must be one of {list(EXPLAINER_NAMES)}")
        kwargs = {k: v for k, v in entry.items() if k != "name"}
        try:
            cfg = ExplainerConfig(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{epath}: {exc}") from exc
        out.append(ExplainerEntry(entry["name"], cfg))
    names = [e.name for e in out]
    _require(len(names) == len(set(names)), path, "duplicate explainer names")
    return out


def config_from_dict(raw: Any, path: str = "config") -> RunConfig:
    _require(isinstance(raw, dict), path, "must be a JSON object")
    _take(raw, path, {"dataset", "model", "train", "explainers", "modes",
                      "thresholds", "finetune", "fidelity_truncation",
                      "manual_optimal_threshold", "workers", "out"})
    cfg = RunConfig()
    if "dataset" in raw:
        cfg.data = _build_data(raw["dataset"], f"{path}.dataset")
    if "model" in raw:
        _require(isinstance(raw["model"], dict), f"{path}.model",
                 "must be an object")
        _take(raw["model"], f"{path}.model", {"hidden"})
        if "hidden" in raw["model"]:
            v = raw["model"]["hidden"]
            _require(isinstance(v, int) and v >= 2, f"{path}.model.hidden",
                     "must be an integer >= 2")
            cfg.hidden = v
    if "train" in raw:
        cfg.train = _build_train(raw["train"], f"{path}.train")
    if "explainers" in raw:
        cfg.explainers = _build_explainers(raw["explainers"], f"{path}.explainers")
    if "modes" in raw:
        v = raw["modes"]
        _require(isinstance(v, list) and v and all(m in MODES for m in v)
                 and len(set(v)) == len(v),
                 f"{path}.modes", f"must be a nonempty subset of {list(MODES)}")
        cfg.modes = list(v)
    if "thresholds" in raw:
        v = raw["thresholds"]
        ok = (isinstance(v, list) and len(v) >= 1
              and all(isinstance(t, (int, float)) and not isinstance(t, bool)
                      and 0.0 <= t <= 1.0 for t in v)
              and all(b > a for a, b in zip(v, v[1:])))
        _require(ok, f"{path}.thresholds",
                 "must be strictly increasing values in [0, 1]")
        cfg.thresholds = [float(t) for t in v]
    if "finetune" in raw:
        _require(isinstance(raw["finetune"], bool), f"{path}.finetune",
                 "must be a boolean")
        cfg.finetune = raw["finetune"]
    if "fidelity_truncation" in raw:
        v = raw["fidelity_truncation"]
        _require(isinstance(v, dict), f"{path}.fidelity_truncation",
                 "must be an object")
        _take(v, f"{path}.fidelity_truncation", {"kind", "value"})
        try:
            cfg.fidelity_truncation = Truncation(
                kind=v.get("kind", "full"), value=v.get("value", 0.0)
            )
        except ValueError as exc:
            raise ConfigError(f"{path}.fidelity_truncation: {exc}") from exc
    if "manual_optimal_threshold" in raw and raw["manual_optimal_threshold"] is not None:
        v = raw["manual_optimal_threshold"]
        _require(isinstance(v, (int, float)) and 0.0 < v <= 1.0,
                 f"{path}.manual_optimal_threshold", "must be in (0, 1]")
        cfg.manual_optimal_threshold = float(v)
    if "workers" in raw:
        _require(isinstance(raw["workers"], int) and raw["workers"] >= 1,
                 f"{path}.workers", "must be a positive integer")
        cfg.workers = raw["workers"]
    if "out" in raw and raw["out"] is not None:
        _require(isinstance(raw["out"], str), f"{path}.out", "must be a string")
        cfg.out = raw["out"]
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(raw)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
