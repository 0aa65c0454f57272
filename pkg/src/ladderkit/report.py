"""Run-report assembly: joins reference and predicted artifacts.

A run directory holds one subdirectory per pipeline output: "reference"
for the exhaustive ground truth and one directory per prediction mode
(normally "predicted" and "predicted_nohq").  The report joins them per
scene, computes curve deltas, aggregates complexity, and buckets the
first-rung quality deltas by which side of the target they landed on.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import uuid
from pathlib import Path

from .bd import RQAnchorSet, bd_quality, bd_rate
from .errors import InsufficientAnchorsError, SchemaError
from .ground_truth import DEFAULT_HQ_VMAF, BitrateLadder
from .orchestrator import ComplexityEntry, summarize_complexity
from .predictor import hq_delta_report
from .store import load_ladder, read_json, write_json

logger = logging.getLogger(__name__)

REPORT_FORMAT = "ladder-run-report"
REPORT_VERSION = 1
RESERVED_DIRS = {"reference", "sweeps", "report"}
BD_STATUS_NO_REFERENCE = "reference-unavailable"
BD_STATUS_INSUFFICIENT = "insufficient-anchors"


def _rung_rows(ladder: BitrateLadder) -> list[dict]:
    return [
        {
            "resolution": r.resolution.label,
            "crf": r.crf,
            "bitrate_kbps": r.bitrate_kbps,
            "vmaf": r.vmaf,
        }
        for r in ladder.rungs
    ]


def _bd_payload(predicted: BitrateLadder, reference: BitrateLadder | None) -> dict:
    if reference is None:
        return {"status": BD_STATUS_NO_REFERENCE}
    try:
        rate = bd_rate(
            RQAnchorSet.from_ladder(predicted), RQAnchorSet.from_ladder(reference)
        )
        quality = bd_quality(
            RQAnchorSet.from_ladder(predicted), RQAnchorSet.from_ladder(reference)
        )
    except InsufficientAnchorsError as exc:
        return {"status": BD_STATUS_INSUFFICIENT, "detail": str(exc)}
    if not rate.ok or not quality.ok:
        return {"status": "no-overlap"}
    return {
        "status": "ok",
        "bd_rate_percent": rate.bd_rate_percent,
        "bd_vmaf": quality.bd_vmaf,
    }


def _bucket_stats(deltas: list[tuple[float, float | None]]) -> dict:
    """Mean/std of (delta_vmaf, delta_rate) tuples; rate may be unknown."""
    n = len(deltas)
    if n == 0:
        return {"n": 0}
    vmafs = [v for v, _ in deltas]
    rates = [r for _, r in deltas if r is not None]

    def mean(xs):
        return sum(xs) / len(xs)

    def std(xs):
        if len(xs) < 2:
            return 0.0
        m = mean(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))

    out = {
        "n": n,
        "mean_delta_vmaf": mean(vmafs),
        "std_delta_vmaf": std(vmafs),
    }
    if rates:
        out["mean_delta_rate_kbps"] = mean(rates)
        out["std_delta_rate_kbps"] = std(rates)
    return out


def discover_modes(run_dir: Path | str) -> list[str]:
    run_dir = Path(run_dir)
    modes = []
    for child in sorted(run_dir.iterdir()):
        if child.is_dir() and child.name not in RESERVED_DIRS:
            if any(child.glob("*.ladder.csv")):
                modes.append(child.name)
    return modes


def _scene_id_of(ladder_csv: Path) -> str:
    # "<scene>.ladder.csv" -> "<scene>"
    return ladder_csv.name[: -len(".ladder.csv")]


def assemble_report(run_dir: Path | str, *, target_vmaf: float = DEFAULT_HQ_VMAF) -> dict:
    """Build the run report object from a run directory.

    Every predicted ladder is either paired with its reference ladder or
    explicitly marked reference-unavailable.
    """
    run_dir = Path(run_dir)
    modes = discover_modes(run_dir)
    if not modes:
        raise SchemaError(f"{run_dir}: no prediction outputs found")

    reference_dir = run_dir / "reference"
    references: dict[str, BitrateLadder] = {}
    reference_meta: dict[str, dict] = {}
    if reference_dir.is_dir():
        for ladder_csv in sorted(reference_dir.glob("*.ladder.csv")):
            scene = _scene_id_of(ladder_csv)
            references[scene] = load_ladder(ladder_csv)
            reference_meta[scene] = read_json(ladder_csv.with_suffix(".json"))

    scenes: dict[str, dict] = {}
    per_mode_bd: dict[str, list[tuple[float, float]]] = {m: [] for m in modes}
    per_mode_complexity: dict[str, list[ComplexityEntry]] = {m: [] for m in modes}
    per_mode_buckets: dict[str, dict[str, list]] = {
        m: {"above_target": [], "below_target": []} for m in modes
    }

    for mode in modes:
        for ladder_csv in sorted((run_dir / mode).glob("*.ladder.csv")):
            scene = _scene_id_of(ladder_csv)
            predicted = load_ladder(ladder_csv)
            meta = read_json(ladder_csv.with_suffix(".json"))
            reference = references.get(scene)

            entry = scenes.setdefault(
                scene,
                {
                    "reference_available": reference is not None,
                    "reference": None,
                    "modes": {},
                },
            )
            if reference is not None and entry["reference"] is None:
                ref_meta = reference_meta.get(scene, {})
                entry["reference"] = {
                    "rungs": _rung_rows(reference),
                    "k": reference.k_step,
                    "r_min_kbps": reference.r_min_kbps,
                    "hq": ref_meta.get("hq"),
                }

            bd = _bd_payload(predicted, reference)
            if bd["status"] == "ok":
                per_mode_bd[mode].append((bd["bd_rate_percent"], bd["bd_vmaf"]))

            counts = meta.get("counts") or {}
            complexity = None
            if {"pre_encodes", "rung_encodes"} <= counts.keys():
                c = ComplexityEntry(
                    scene_id=scene,
                    pre_encodes=int(counts["pre_encodes"]),
                    rung_encodes=int(counts["rung_encodes"]),
                )
                per_mode_complexity[mode].append(c)
                complexity = {
                    "pre_encodes": c.pre_encodes,
                    "rung_encodes": c.rung_encodes,
                    "total": c.total,
                    "reduction_percent": c.reduction_percent,
                }

            rate_at_target = None
            ref_meta = reference_meta.get(scene) or {}
            hq_meta = ref_meta.get("hq") or {}
            if isinstance(hq_meta.get("bitrate_kbps"), (int, float)):
                rate_at_target = float(hq_meta["bitrate_kbps"])
            hq_delta = None
            if predicted.top.vmaf is not None:
                delta = hq_delta_report(
                    predicted,
                    rate_at_target_kbps=rate_at_target,
                    target_vmaf=target_vmaf,
                )
                hq_delta = {
                    "delta_vmaf": delta.delta_vmaf,
                    "delta_rate_kbps": delta.delta_rate_kbps,
                    "target_vmaf": delta.target_vmaf,
                }
                bucket = "above_target" if delta.delta_vmaf >= 0 else "below_target"
                per_mode_buckets[mode][bucket].append(
                    (delta.delta_vmaf, delta.delta_rate_kbps)
                )

            entry["modes"][mode] = {
                "rungs": _rung_rows(predicted),
                "k": predicted.k_step,
                "r_min_kbps": predicted.r_min_kbps,
                "bd": bd,
                "complexity": complexity,
                "hq_delta": hq_delta,
                "warnings": list(meta.get("warnings", [])),
            }

    summary: dict[str, dict] = {}
    for mode in modes:
        bd_pairs = per_mode_bd[mode]
        mode_summary: dict = {
            "scenes": len(scenes),
            "scenes_with_bd": len(bd_pairs),
        }
        if bd_pairs:
            mode_summary["mean_bd_rate_percent"] = sum(p for p, _ in bd_pairs) / len(bd_pairs)
            mode_summary["mean_bd_vmaf"] = sum(v for _, v in bd_pairs) / len(bd_pairs)
        mode_summary["complexity"] = summarize_complexity(per_mode_complexity[mode])
        mode_summary["first_rung_buckets"] = {
            bucket: _bucket_stats(deltas)
            for bucket, deltas in per_mode_buckets[mode].items()
        }
        summary[mode] = mode_summary

    return {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "target_vmaf": target_vmaf,
        "modes": modes,
        "scenes": scenes,
        "summary": summary,
    }


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    tmp = path.with_name(path.name + f".{uuid.uuid4().hex}.tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    os.replace(tmp, path)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_files(report: dict, out_dir: Path | str) -> dict[str, Path]:
    """Write the report JSON plus plot-ready CSV extracts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"report": write_json(out_dir / "report.json", report)}

    bd_rows = []
    overlay_rows = []
    hq_rows = []
    summary_rows = []

    for scene in sorted(report["scenes"]):
        entry = report["scenes"][scene]
        ref = entry.get("reference")
        if ref:
            for i, r in enumerate(ref["rungs"]):
                overlay_rows.append(
                    ["reference", scene, i, r["resolution"], r["crf"],
                     _fmt(r["bitrate_kbps"]), _fmt(r["vmaf"])]
                )
        for mode in report["modes"]:
            mode_entry = entry["modes"].get(mode)
            if mode_entry is None:
                continue
            for i, r in enumerate(mode_entry["rungs"]):
                overlay_rows.append(
                    [mode, scene, i, r["resolution"], r["crf"],
                     _fmt(r["bitrate_kbps"]), _fmt(r["vmaf"])]
                )
            bd = mode_entry["bd"]
            bd_rows.append(
                [mode, scene, bd["status"],
                 _fmt(bd.get("bd_rate_percent")), _fmt(bd.get("bd_vmaf"))]
            )
            hq = mode_entry.get("hq_delta")
            if hq:
                hq_rows.append(
                    [mode, scene, _fmt(hq["delta_vmaf"]), _fmt(hq["delta_rate_kbps"])]
                )

    for mode in report["modes"]:
        buckets = report["summary"][mode]["first_rung_buckets"]
        for bucket in ("above_target", "below_target"):
            stats = buckets.get(bucket, {"n": 0})
            summary_rows.append(
                [mode, bucket, stats.get("n", 0),
                 _fmt(stats.get("mean_delta_rate_kbps")),
                 _fmt(stats.get("std_delta_rate_kbps")),
                 _fmt(stats.get("mean_delta_vmaf")),
                 _fmt(stats.get("std_delta_vmaf"))]
            )

    bd_path = out_dir / "bd_values.csv"
    _write_csv(bd_path, ["mode", "scene_id", "status", "bd_rate_percent", "bd_vmaf"], bd_rows)
    paths["bd_values"] = bd_path

    overlay_path = out_dir / "ladder_overlays.csv"
    _write_csv(
        overlay_path,
        ["mode", "scene_id", "rung", "resolution", "crf", "bitrate_kbps", "vmaf"],
        overlay_rows,
    )
    paths["ladder_overlays"] = overlay_path

    hq_path = out_dir / "first_rung_deltas.csv"
    _write_csv(hq_path, ["mode", "scene_id", "delta_vmaf", "delta_rate_kbps"], hq_rows)
    paths["first_rung_deltas"] = hq_path

    summary_path = out_dir / "first_rung_summary.csv"
    _write_csv(
        summary_path,
        ["mode", "bucket", "n", "mean_delta_rate_kbps", "std_delta_rate_kbps",
         "mean_delta_vmaf", "std_delta_vmaf"],
        summary_rows,
    )
    paths["first_rung_summary"] = summary_path
    return paths
