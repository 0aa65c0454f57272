from __future__ import annotations

import json

import pytest

from ladderkit import SchemaError, save_ladder
from ladderkit.report import assemble_report, discover_modes, write_report_files

import synthetic
from pipeline_helpers import (
    exact_encode_fn,
    gt_predictions,
    reference_artifacts,
    train_calibration,
)
from ladderkit import predict_ladder

SCENES = tuple(range(5))
EXTRA_SCENE = 30  # predicted only, no reference artifacts


def _reference_meta(hq) -> dict:
    return {
        "kind": "reference",
        "hq": {
            "crf": hq.point.crf,
            "bitrate_kbps": hq.point.bitrate_kbps,
            "vmaf": hq.point.vmaf,
            "reachable": hq.reachable,
            "target_vmaf": hq.target_vmaf,
        },
        "warnings": [],
    }


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    cal = train_calibration()
    for index in SCENES + (EXTRA_SCENE,):
        params = synthetic.make_scene(index)
        encode = exact_encode_fn(params)
        if index != EXTRA_SCENE:
            _, _, hq, ladder = reference_artifacts(params)
            save_ladder(
                ladder,
                root / "reference" / f"{params.scene_id}.ladder.csv",
                meta=_reference_meta(hq),
            )
        for mode, use_hq in (("predicted", True), ("predicted_nohq", False)):
            predicted = gt_predictions(
                params, first_slot="hq" if use_hq else "low"
            )
            outcome = predict_ladder(predicted, cal, encode, use_hq=use_hq)
            save_ladder(
                outcome.ladder,
                root / mode / f"{params.scene_id}.ladder.csv",
                meta={
                    "kind": mode,
                    "counts": {
                        "pre_encodes": outcome.pre_encodes,
                        "rung_encodes": outcome.rung_encodes,
                        "total": outcome.total_encodes,
                    },
                    "provenance": "file",
                    "warnings": list(outcome.warnings),
                },
            )
    # Decoys that mode discovery must skip.
    (root / "sweeps").mkdir()
    (root / "junk").mkdir()
    return root


def test_discover_modes_skips_reserved_and_empty(run_dir):
    assert discover_modes(run_dir) == ["predicted", "predicted_nohq"]


def test_report_joins_scenes(run_dir):
    report = assemble_report(run_dir)
    assert report["modes"] == ["predicted", "predicted_nohq"]
    assert len(report["scenes"]) == len(SCENES) + 1

    for index in SCENES:
        entry = report["scenes"][f"scene{index:03d}"]
        assert entry["reference_available"]
        assert entry["reference"]["hq"]["crf"] is not None
        for mode in ("predicted", "predicted_nohq"):
            mode_entry = entry["modes"][mode]
            assert mode_entry["bd"]["status"] == "ok"
            assert mode_entry["complexity"]["pre_encodes"] == 7
            assert mode_entry["hq_delta"] is not None

    orphan = report["scenes"][f"scene{EXTRA_SCENE:03d}"]
    assert not orphan["reference_available"]
    assert orphan["modes"]["predicted"]["bd"]["status"] == "reference-unavailable"
    # Without a reference sweep there is no rate at the target quality.
    assert orphan["modes"]["predicted"]["hq_delta"]["delta_rate_kbps"] is None


def test_report_summary_and_buckets(run_dir):
    report = assemble_report(run_dir)
    for mode in report["modes"]:
        summary = report["summary"][mode]
        assert summary["scenes"] == len(SCENES) + 1
        assert summary["scenes_with_bd"] == len(SCENES)
        assert "mean_bd_rate_percent" in summary
        assert summary["complexity"]["scenes"] == len(SCENES) + 1
        assert summary["complexity"]["mean_total_encodes"] >= 7

    # The no-HQ first rungs land on both sides of the target across the
    # five reference scenes, and the scenes with a reference also carry a
    # rate delta.
    buckets = report["summary"]["predicted_nohq"]["first_rung_buckets"]
    assert buckets["above_target"]["n"] >= 1
    assert buckets["below_target"]["n"] >= 1
    populated = [b for b in buckets.values() if b["n"] >= 2]
    for stats in populated:
        assert "mean_delta_vmaf" in stats and "std_delta_vmaf" in stats
        assert "mean_delta_rate_kbps" in stats and "std_delta_rate_kbps" in stats


def test_report_files(run_dir, tmp_path):
    report = assemble_report(run_dir)
    paths = write_report_files(report, tmp_path / "out")
    saved = json.loads(paths["report"].read_text())
    assert saved["format"] == "ladder-run-report"

    bd_lines = paths["bd_values"].read_text().strip().splitlines()
    assert bd_lines[0] == "mode,scene_id,status,bd_rate_percent,bd_vmaf"
    assert len(bd_lines) == 1 + 2 * (len(SCENES) + 1)

    summary_lines = paths["first_rung_summary"].read_text().strip().splitlines()
    assert len(summary_lines) == 1 + 4  # two modes x two buckets

    overlay_lines = paths["ladder_overlays"].read_text().strip().splitlines()
    assert overlay_lines[0] == "mode,scene_id,rung,resolution,crf,bitrate_kbps,vmaf"
    assert any(line.startswith("reference,") for line in overlay_lines[1:])


def test_report_requires_mode_outputs(tmp_path):
    empty = tmp_path / "empty-run"
    empty.mkdir()
    with pytest.raises(SchemaError, match="no prediction outputs"):
        assemble_report(empty)
