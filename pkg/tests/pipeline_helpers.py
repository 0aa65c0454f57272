"""Glue between the synthetic scene family and the package under test."""
from __future__ import annotations

import sys
from pathlib import Path

from ladderkit import (
    Calibration,
    CalibrationSample,
    PredictedCrfs,
    Resolution,
    RQPoint,
    RQSweep,
    build_pareto_front,
    build_reference_ladder,
    extract_crossovers,
    extract_hq_point,
    fit_calibration,
    fit_crf_rate,
)

import synthetic

# Held-out training block for calibration fitting; evaluation scenes use
# low indices so the two never overlap.
TRAIN_INDICES = tuple(range(100, 108))

RES_BY_POSITION = (
    Resolution.P1080,
    Resolution.P720,
    Resolution.P480,
    Resolution.P360,
)


def build_sweep(params: synthetic.SceneParams) -> RQSweep:
    points = tuple(
        RQPoint(
            resolution=Resolution.from_label(label),
            crf=crf,
            bitrate_kbps=rate,
            vmaf=vmaf,
        )
        for label, crf, rate, vmaf in synthetic.sweep_rows(params)
    )
    return RQSweep(scene_id=params.scene_id, points=points)


def exact_encode_fn(params: synthetic.SceneParams):
    """Encode callback returning model-exact bitrates and quality."""

    def encode(resolution: Resolution, crf: int) -> RQPoint:
        position = RES_BY_POSITION.index(resolution)
        return RQPoint(
            resolution=resolution,
            crf=crf,
            bitrate_kbps=synthetic.rate_for(params, position, crf),
            vmaf=synthetic.vmaf_for(params, position, crf),
        )

    return encode


def scene_zetas(sweep: RQSweep) -> dict[Resolution, float]:
    zetas = {}
    for res in RES_BY_POSITION:
        points = sweep.for_resolution(res)
        model = fit_crf_rate(res, [(p.crf, p.bitrate_kbps) for p in points])
        zetas[res] = model.zeta
    return zetas


def calibration_sample(params: synthetic.SceneParams) -> CalibrationSample:
    sweep = build_sweep(params)
    front = build_pareto_front(sweep.points)
    return CalibrationSample(
        crossovers=extract_crossovers(params.scene_id, front),
        zetas=scene_zetas(sweep),
    )


def train_calibration(indices=TRAIN_INDICES) -> Calibration:
    samples = [calibration_sample(synthetic.make_scene(i)) for i in indices]
    return fit_calibration(samples)


def gt_predictions(
    params: synthetic.SceneParams, *, first_slot: str = "hq"
) -> PredictedCrfs:
    """Ground-truth entry CRFs; first_slot "hq" carries the high-quality
    CRF, "low" the plain 1080p entry CRF (for no-HQ runs)."""
    entries = synthetic.ground_truth_entry_crfs(params)
    slot = entries["crf_hq_s1"] if first_slot == "hq" else entries["crf_low_s1"]
    return PredictedCrfs(
        scene_id=params.scene_id,
        crf_hq_s1=slot,
        crf_low_s2=entries["crf_low_s2"],
        crf_low_s3=entries["crf_low_s3"],
        crf_low_s4=entries["crf_low_s4"],
        provenance="file",
    )


def reference_artifacts(params: synthetic.SceneParams, *, k=2.0, r_min=150.0):
    """Sweep, front, HQ point, and reference ladder for one scene."""
    sweep = build_sweep(params)
    front = build_pareto_front(sweep.points)
    hq = extract_hq_point(sweep)
    ladder = build_reference_ladder(
        front, hq, k=k, r_min_kbps=r_min, scene_id=params.scene_id
    )
    return sweep, front, hq, ladder


TESTS_DIR = Path(__file__).resolve().parent


def mock_tool_settings():
    """Tool templates pointing at the mock encoder and quality scripts."""
    from ladderkit import ToolSettings

    encoder = TESTS_DIR / "mock_encoder.py"
    quality = TESTS_DIR / "mock_quality.py"
    return ToolSettings(
        encode_cmd=(
            f"{sys.executable} {encoder} --input {{input}} --output {{output}} "
            "--width {width} --height {height} --crf {crf}"
        ),
        quality_cmd=(
            f"{sys.executable} {quality} --encoded {{encoded}} --source {{source}} "
            "--width {width} --height {height}"
        ),
        encoder_version="mock-1",
    )


def scene_workspace(root: Path, params: synthetic.SceneParams):
    """Write the params file that doubles as the source clip; return its
    manifest plus matching tool settings."""
    from ladderkit import SceneManifest

    root.mkdir(parents=True, exist_ok=True)
    source = root / f"{params.scene_id}.json"
    synthetic.write_model_file(params, source)
    manifest = SceneManifest(
        scene_id=params.scene_id,
        source_path=source,
        frame_rate=params.frame_rate,
        frame_count=params.frame_count,
    )
    return manifest, mock_tool_settings()
