"""Merging run summaries into comparison tables and plot-ready files.

A report directory gets one comparison table (rows ranked by edge-ranking
score within dataset/mode), one wide table per (dataset, mode) with a
column per explainer (NA for missing thresholds), and one three-column
file per curve (t, mean, stderr). All reals carry 9 significant digits, so
parsing a table back recovers the stored values exactly.
"""

from __future__ import annotations

import json
import os
from typing import Optional

from .dataio import atomic_write_text, fmt_real
from .errors import GinxError, MissingArtifactError

PLOTDATA_VERSION = "ginx-plotdata v1"


def find_summaries(root: str) -> list[str]:
    hits = []
    for dirpath, _, filenames in os.walk(root):
        for name in sorted(filenames):
            if name in ("summary.json", "summary_nofinetune.json"):
                hits.append(os.path.join(dirpath, name))
    return sorted(hits)


def load_summaries(root: str) -> list[dict]:
    paths = find_summaries(root)
    if not paths:
        raise MissingArtifactError(
            f"no summary.json files under {root}; run `ginx ginx-eval` first"
        )
    out = []
    for p in paths:
        with open(p, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        data["_path"] = p
        out.append(data)
    hashes = {s.get("dataset_hash") for s in out}
    if len(hashes) > 1:
        raise GinxError(
            "refusing to merge artifacts with mismatched dataset hashes: "
            + ", ".join(sorted(str(h) for h in hashes))
        )
    return out


def _fmt_cell(value: Optional[float]) -> str:
    return "NA" if value is None else fmt_real(value)


def comparison_table(summaries: list[dict]) -> str:
    """One row per (dataset, explainer, mode, finetuned), ranked by
    edge-ranking score (descending) within a dataset/mode group."""
    rows = []
    for s in summaries:
        for curve in s.get("curves", []):
            name = curve["explainer"]
            info = s.get("explainers", {}).get(name, {})
            fid = info.get("fidelity", {}).get(curve["mode"], {})
            rows.append({
                "dataset": s["dataset"],
                "explainer": name,
                "mode": curve["mode"],
                "finetuned": curve.get("finetuned", True),
                "edgerank": curve.get("edgerank"),
                "auc": info.get("auc"),
                "critical_threshold": info.get("critical_threshold"),
                "optimal_threshold": s.get("optimal_threshold"),
                "ginx_at_optimal": _value_at(curve, s.get("optimal_threshold")),
                "faithfulness": fid.get("faithfulness"),
                "partial": curve.get("partial", False),
            })
    rows.sort(key=lambda r: (
        r["dataset"], r["mode"], not r["finetuned"],
        -(r["edgerank"] if r["edgerank"] is not None else float("-inf")),
        r["explainer"],
    ))
    header = ("dataset,explainer,mode,finetuned,edgerank,auc,"
              "critical_threshold,optimal_threshold,ginx_at_optimal,"
              "faithfulness,partial")
    lines = [header]
    for r in rows:
        lines.append(",".join([
            r["dataset"], r["explainer"], r["mode"],
            "yes" if r["finetuned"] else "no",
            _fmt_cell(r["edgerank"]), _fmt_cell(r["auc"]),
            _fmt_cell(r["critical_threshold"]),
            _fmt_cell(r["optimal_threshold"]),
            _fmt_cell(r["ginx_at_optimal"]),
            _fmt_cell(r["faithfulness"]),
            "yes" if r["partial"] else "no",
        ]))
    return "\n".join(lines) + "\n"


def _value_at(curve: dict, t: Optional[float]) -> Optional[float]:
    if t is None:
        return None
    for ti, mean in zip(curve["thresholds"], curve["mean"]):
        if abs(ti - t) < 1e-9:
            return mean
    return None


def plotdata_table(
    curves: list[dict], dataset: str, mode: str, config_hash: str
) -> str:
    """Wide table: one threshold column plus one mean column per explainer."""
    thresholds = sorted({t for c in curves for t in c["thresholds"]})
    names = [c["explainer"] for c in curves]
    lines = [
        f"# {PLOTDATA_VERSION}",
        f"# dataset={dataset} mode={mode}",
        "# units: per-threshold score in [0,1] (1 - test accuracy), "
        "mean over seeds",
        f"# config_hash={config_hash}",
        "\t".join(["t"] + names),
    ]
    for t in thresholds:
        cells = [fmt_real(t)]
        for c in curves:
            cells.append(_fmt_cell(_value_at(c, t)))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def curve_table(curve: dict, dataset: str, config_hash: str) -> str:
    lines = [
        f"# {PLOTDATA_VERSION}",
        f"# dataset={dataset} explainer={curve['explainer']} "
        f"mode={curve['mode']} finetuned={'yes' if curve.get('finetuned', True) else 'no'}",
        "# units: per-threshold score in [0,1] (1 - test accuracy); "
        "stderr over seeds",
        f"# config_hash={config_hash}",
        "t\tmean\tstderr",
    ]
    for t, mean, se in zip(curve["thresholds"], curve["mean"], curve["stderr"]):
        lines.append("\t".join([fmt_real(t), _fmt_cell(mean), fmt_real(se)]))
    return "\n".join(lines) + "\n"


def parse_plotdata(path: str) -> tuple[list[str], list[list[Optional[float]]]]:
    """Read a plot-data table back; NA cells become None."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [l for l in fh.read().splitlines() if l and not l.startswith("#")]
    header = lines[0].split("\t")
    rows = []
    for line in lines[1:]:
        cells = line.split("\t")
        rows.append([None if c == "NA" else float(c) for c in cells])
    return header, rows


def write_report(root: str, report_dir: Optional[str] = None) -> list[str]:
    """Merge all summaries under ``root``; returns the files written."""
    summaries = load_summaries(root)
    report_dir = report_dir or os.path.join(root, "report")
    os.makedirs(report_dir, exist_ok=True)
    written = []

    path = os.path.join(report_dir, "report.csv")
    atomic_write_text(path, comparison_table(summaries))
    written.append(path)

    groups: dict[tuple[str, str, bool], list[dict]] = {}
    hashes: dict[tuple[str, str, bool], str] = {}
    for s in summaries:
        for curve in s.get("curves", []):
            key = (s["dataset"], curve["mode"], curve.get("finetuned", True))
            groups.setdefault(key, []).append(curve)
            hashes[key] = s.get("config_hash", "")
    for (dataset, mode, finetuned), curves in sorted(groups.items()):
        curves = sorted(curves, key=lambda c: c["explainer"])
        suffix = "" if finetuned else "_nofinetune"
        path = os.path.join(report_dir, f"plotdata_{dataset}_{mode}{suffix}.tsv")
        atomic_write_text(
            path, plotdata_table(curves, dataset, mode, hashes[(dataset, mode, finetuned)])
        )
        written.append(path)
        for curve in curves:
            path = os.path.join(
                report_dir,
                f"curve_{dataset}_{mode}_{curve['explainer']}{suffix}.tsv",
            )
            atomic_write_text(
                path, curve_table(curve, dataset, hashes[(dataset, mode, finetuned)])
            )
            written.append(path)
    return written
