"""CSV and JSON persistence for ladders and Pareto fronts.

All floats are written in shortest round-trip form so a save/load cycle
is exact and repeated runs produce byte-identical files.
"""
from __future__ import annotations

import csv
import json
import os
import uuid
from pathlib import Path

from .errors import SchemaError
from .ground_truth import BitrateLadder, LadderRung
from .rq import ParetoFront, Resolution, RQPoint

LADDER_COLUMNS = ("resolution", "crf", "bitrate_kbps", "vmaf")
FRONT_COLUMNS = ("resolution", "crf", "bitrate_kbps", "vmaf")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + f".{uuid.uuid4().hex}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_ladder(ladder: BitrateLadder, csv_path: Path | str, *, meta: dict | None = None) -> Path:
    """Write ladder rungs as CSV, with walk parameters in a JSON sidecar."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = csv_path.with_name(csv_path.name + f".{uuid.uuid4().hex}.tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LADDER_COLUMNS)
        for rung in ladder.rungs:
            writer.writerow(
                [
                    rung.resolution.label,
                    rung.crf,
                    repr(rung.bitrate_kbps),
                    "" if rung.vmaf is None else repr(rung.vmaf),
                ]
            )
    os.replace(tmp, csv_path)

    sidecar = {
        "scene_id": ladder.scene_id,
        "k": ladder.k_step,
        "r_min_kbps": ladder.r_min_kbps,
        "rungs": len(ladder.rungs),
    }
    if meta:
        sidecar.update(meta)
    _atomic_write_text(
        csv_path.with_suffix(".json"), json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
    )
    return csv_path


def load_ladder(csv_path: Path | str) -> BitrateLadder:
    csv_path = Path(csv_path)
    sidecar_path = csv_path.with_suffix(".json")
    scene_id = csv_path.stem
    k = None
    r_min = None
    if sidecar_path.exists():
        try:
            meta = json.loads(sidecar_path.read_text())
            scene_id = str(meta.get("scene_id", scene_id))
            k = meta.get("k")
            r_min = meta.get("r_min_kbps")
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{sidecar_path}: bad ladder sidecar: {exc}") from exc

    rungs = []
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != LADDER_COLUMNS:
            raise SchemaError(
                f"{csv_path}: expected columns {','.join(LADDER_COLUMNS)}, "
                f"got {reader.fieldnames}"
            )
        for i, row in enumerate(reader):
            try:
                rungs.append(
                    LadderRung(
                        resolution=Resolution.from_label(row["resolution"]),
                        crf=int(row["crf"]),
                        bitrate_kbps=float(row["bitrate_kbps"]),
                        vmaf=float(row["vmaf"]) if row["vmaf"] else None,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{csv_path}: bad row {i + 2}: {exc}") from exc
    if not rungs:
        raise SchemaError(f"{csv_path}: ladder file has no rows")
    kwargs = {}
    if k is not None:
        kwargs["k_step"] = float(k)
    if r_min is not None:
        kwargs["r_min_kbps"] = float(r_min)
    return BitrateLadder(scene_id=scene_id, rungs=tuple(rungs), **kwargs)


def save_front(front: ParetoFront, csv_path: Path | str) -> Path:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = csv_path.with_name(csv_path.name + f".{uuid.uuid4().hex}.tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRONT_COLUMNS)
        for p in front.points:
            writer.writerow([p.resolution.label, p.crf, repr(p.bitrate_kbps), repr(p.vmaf)])
    os.replace(tmp, csv_path)
    return csv_path


def load_front(csv_path: Path | str) -> ParetoFront:
    csv_path = Path(csv_path)
    points = []
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != FRONT_COLUMNS:
            raise SchemaError(
                f"{csv_path}: expected columns {','.join(FRONT_COLUMNS)}, "
                f"got {reader.fieldnames}"
            )
        for i, row in enumerate(reader):
            try:
                points.append(
                    RQPoint(
                        resolution=Resolution.from_label(row["resolution"]),
                        crf=int(row["crf"]),
                        bitrate_kbps=float(row["bitrate_kbps"]),
                        vmaf=float(row["vmaf"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{csv_path}: bad row {i + 2}: {exc}") from exc
    if not points:
        raise SchemaError(f"{csv_path}: front file has no rows")
    return ParetoFront(points=tuple(points))


def write_json(path: Path | str, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: Path | str) -> dict:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    return obj
