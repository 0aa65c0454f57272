"""Entry-CRF prediction files consumed by the ladder toolchain.

Four models (one per target) score a scene's features; the raw values
are rounded and clamped to the CRF grid and written as the shared
predictions JSON, one entry per scene, provenance "model".
"""
from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Mapping, Sequence

from .features import FeatureSequence
from .training import TrainResult, predict_value

PREDICTIONS_FORMAT = "predicted-entry-crfs"
PREDICTIONS_VERSION = 1

TARGETS = ("crf_hq_s1", "crf_low_s2", "crf_low_s3", "crf_low_s4")

CRF_MIN, CRF_MAX = 10, 51


def clamp_crf(raw: float) -> int:
    """Round half up, then clamp to the encoder's CRF grid."""
    if not math.isfinite(raw):
        raise ValueError(f"predicted CRF must be finite, got {raw!r}")
    return min(CRF_MAX, max(CRF_MIN, math.floor(raw + 0.5)))


def predict_scene(
    features: FeatureSequence,
    models: Mapping[str, TrainResult],
) -> dict:
    """One scene's predictions entry from its four target models."""
    missing = [t for t in TARGETS if t not in models]
    if missing:
        raise ValueError(f"missing models for targets {missing}")
    entry = {"scene_id": features.scene_id, "provenance": "model"}
    for target in TARGETS:
        entry[target] = clamp_crf(predict_value(models[target].model, features))
    return entry


def write_predictions(entries: Sequence[dict], path: Path | str) -> Path:
    """Write the shared predictions JSON file."""
    for i, entry in enumerate(entries):
        missing = [k for k in ("scene_id", *TARGETS) if k not in entry]
        if missing:
            raise ValueError(f"entry {i} is missing {missing}")
        for target in TARGETS:
            value = entry[target]
            if not isinstance(value, int) or not CRF_MIN <= value <= CRF_MAX:
                raise ValueError(
                    f"entry {i} has {target}={value!r}, need an integer "
                    f"in [{CRF_MIN}, {CRF_MAX}]"
                )
    payload = {
        "format": PREDICTIONS_FORMAT,
        "version": PREDICTIONS_VERSION,
        "scenes": list(entries),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def predict_scenes(
    scenes: Sequence[FeatureSequence],
    models: Mapping[str, TrainResult],
    path: Path | str,
) -> list[dict]:
    entries = [predict_scene(features, models) for features in scenes]
    write_predictions(entries, path)
    return entries
