"""End-to-end command-line workflow on the mock tool pair.

A module-scoped fixture drives one full run (sweep, reference,
calibrate, predict with and without the high-quality first rung, curve
deltas, report) against a single fully swept scene plus a second scene
predicted from a cold cache.  Individual tests then assert on the
recorded exit codes, stdout, and on-disk artifacts.
"""
from __future__ import annotations

import contextlib
import io
import json
import os
from pathlib import Path

import pytest

from ladderkit.cli import main
from ladderkit.crf_rate import load_calibration
from ladderkit.ground_truth import BitrateLadder, LadderRung
from ladderkit.orchestrator import load_sweep, save_sweep
from ladderkit.predictor import save_predictions
from ladderkit.rq import Resolution
from ladderkit.store import load_ladder, save_ladder

import synthetic
from pipeline_helpers import (
    TRAIN_INDICES,
    build_sweep,
    gt_predictions,
    mock_tool_settings,
    reference_artifacts,
)

SWEPT_SCENE = 1
FRESH_SCENE = 7

S1 = Resolution.P1080
S2 = Resolution.P720
S3 = Resolution.P480
S4 = Resolution.P360


def run_cli(*argv) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def write_config(path: Path, cache_dir: str, scenes_file: str, parallelism: int = 16) -> Path:
    tools = mock_tool_settings()
    path.write_text(
        "[run]\n"
        f'cache_dir = "{cache_dir}"\n'
        f'scenes_file = "{scenes_file}"\n'
        f"parallelism = {parallelism}\n\n"
        "[tools]\n"
        f'encode_cmd = "{tools.encode_cmd}"\n'
        f'quality_cmd = "{tools.quality_cmd}"\n'
        f'encoder_version = "{tools.encoder_version}"\n'
    )
    return path


def scene_entry(params: synthetic.SceneParams) -> dict:
    return {
        "scene_id": params.scene_id,
        "source_path": f"sources/{params.scene_id}.json",
        "frame_rate": params.frame_rate,
        "frame_count": params.frame_count,
    }


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    for var in ("LADDERKIT_CACHE_DIR", "MOCK_ENCODER_FAIL_CRF", "MOCK_QUALITY_STYLE"):
        os.environ.pop(var, None)

    root = tmp_path_factory.mktemp("cli_ws")
    runs = root / "runs"
    swept = synthetic.make_scene(SWEPT_SCENE)
    fresh = synthetic.make_scene(FRESH_SCENE)

    (root / "sources").mkdir()
    for params in (swept, fresh):
        synthetic.write_model_file(params, root / "sources" / f"{params.scene_id}.json")
    (root / "scenes.json").write_text(
        json.dumps([scene_entry(swept), scene_entry(fresh)], indent=2)
    )
    config = write_config(root / "config.toml", "cache", "scenes.json")

    tools = mock_tool_settings()
    for i in TRAIN_INDICES[:4]:
        save_sweep(build_sweep(synthetic.make_scene(i)), root / "train_sweeps", tools=tools)

    gt_path = root / "gt_predictions.json"
    nohq_path = root / "nohq_predictions.json"
    save_predictions([gt_predictions(swept), gt_predictions(fresh)], gt_path)
    save_predictions(
        [gt_predictions(swept, first_slot="low"), gt_predictions(fresh, first_slot="low")],
        nohq_path,
    )

    calibration = runs / "calibration.json"
    steps = {
        "sweep": run_cli(
            "sweep", "--config", config, "--out", runs / "sweeps", "--scenes", swept.scene_id
        ),
        "reference": run_cli(
            "reference", "--sweeps", runs / "sweeps", "--out", runs / "reference"
        ),
        "calibrate": run_cli(
            "calibrate", "--sweeps", root / "train_sweeps", "--out", calibration
        ),
        "predict": run_cli(
            "predict", "--config", config, "--predictions", gt_path,
            "--calibration", calibration, "--out", runs / "predicted",
        ),
        "predict_nohq": run_cli(
            "predict", "--config", config, "--predictions", nohq_path,
            "--calibration", calibration, "--out", runs / "predicted_nohq",
            "--no-hq", "--scenes", swept.scene_id,
        ),
        "bd": run_cli(
            "bd",
            "--test", runs / "predicted" / f"{swept.scene_id}.ladder.csv",
            "--reference", runs / "reference" / f"{swept.scene_id}.ladder.csv",
        ),
        "report": run_cli("report", "--run", runs),
    }
    return {
        "root": root,
        "runs": runs,
        "config": config,
        "gt_path": gt_path,
        "calibration": calibration,
        "swept": swept,
        "fresh": fresh,
        "steps": steps,
    }


def _meta(ladder_csv: Path) -> dict:
    return json.loads(ladder_csv.with_suffix(".json").read_text())


def test_sweep_covers_the_grid(pipeline):
    code, out, _ = pipeline["steps"]["sweep"]
    scene_id = pipeline["swept"].scene_id
    assert code == 0
    assert f"scene {scene_id}: 168 points (168 tool invocations, 0 failures)" in out
    sweep = load_sweep(pipeline["runs"] / "sweeps" / f"{scene_id}.csv")
    assert sweep.is_complete
    assert sweep.scene_id == scene_id


def test_reference_matches_direct_construction(pipeline):
    code, out, _ = pipeline["steps"]["reference"]
    assert code == 0
    params = pipeline["swept"]
    ladder_csv = pipeline["runs"] / "reference" / f"{params.scene_id}.ladder.csv"
    assert (pipeline["runs"] / "reference" / f"{params.scene_id}.front.csv").exists()

    meta = _meta(ladder_csv)
    assert meta["kind"] == "reference"
    assert meta["hq"]["crf"] == synthetic.hq_crf(params)
    assert meta["warnings"] == []

    # Same rungs as the pure-math construction; bitrates only differ by
    # the mock container's byte rounding (at most 0.001 kbps per rung).
    _, _, _, expected = reference_artifacts(params)
    got = load_ladder(ladder_csv)
    assert [(r.resolution, r.crf) for r in got.rungs] == [
        (r.resolution, r.crf) for r in expected.rungs
    ]
    for mine, ref in zip(got.rungs, expected.rungs):
        assert mine.bitrate_kbps == pytest.approx(ref.bitrate_kbps, abs=5.1e-4)


def test_calibrate_recovers_planted_maps(pipeline):
    code, out, _ = pipeline["steps"]["calibrate"]
    assert code == 0
    assert "3 crossover map(s), 1 slope map(s)" in out
    cal = load_calibration(pipeline["calibration"])
    for res in (S1, S2, S3):
        m = cal.crossover_map(res)
        assert m.slope == pytest.approx(1.0, abs=1e-9)
        assert m.intercept == pytest.approx(-2.0, abs=1e-9)
        assert m.plcc == pytest.approx(1.0, abs=1e-9)
    slope = cal.slope_map(S4)
    assert slope.slope == pytest.approx(0.9, abs=1e-9)
    assert slope.intercept == pytest.approx(-0.1, abs=1e-9)


def test_predict_reuses_the_sweep_cache(pipeline):
    code, out, _ = pipeline["steps"]["predict"]
    assert code == 0
    params = pipeline["swept"]
    ladder_csv = pipeline["runs"] / "predicted" / f"{params.scene_id}.ladder.csv"
    meta = _meta(ladder_csv)
    assert meta["kind"] == "predicted"
    assert meta["counts"]["pre_encodes"] == 7
    assert meta["counts"]["total"] == meta["counts"]["pre_encodes"] + meta["counts"]["rung_encodes"]
    # every CRF the prediction touches was already swept
    assert meta["tool_invocations"] == 0

    ladder = load_ladder(ladder_csv)
    assert ladder.top.crf == synthetic.hq_crf(params)
    assert ladder.top.bitrate_kbps == pytest.approx(
        synthetic.rate_for(params, 0, ladder.top.crf), abs=5.1e-4
    )


def test_predict_on_cold_cache_pays_every_encode(pipeline):
    code, _, _ = pipeline["steps"]["predict"]
    assert code == 0
    params = pipeline["fresh"]
    meta = _meta(pipeline["runs"] / "predicted" / f"{params.scene_id}.ladder.csv")
    assert meta["counts"]["pre_encodes"] == 7
    assert meta["tool_invocations"] == meta["counts"]["total"]

    ladder = load_ladder(pipeline["runs"] / "predicted" / f"{params.scene_id}.ladder.csv")
    rates = [r.bitrate_kbps for r in ladder.rungs]
    assert len(rates) >= 5
    assert all(a > b for a, b in zip(rates, rates[1:]))
    assert min(rates) >= 150.0


def test_predict_no_hq_backs_off_the_first_rung(pipeline):
    code, _, _ = pipeline["steps"]["predict_nohq"]
    assert code == 0
    params = pipeline["swept"]
    ladder_csv = pipeline["runs"] / "predicted_nohq" / f"{params.scene_id}.ladder.csv"
    meta = _meta(ladder_csv)
    assert meta["kind"] == "predicted_nohq"
    assert meta["provenance"] == "fallback"
    assert meta["tool_invocations"] == 0

    ladder = load_ladder(ladder_csv)
    entry = synthetic.ground_truth_entry_crfs(params)["crf_low_s1"]
    assert ladder.top.resolution is S1
    assert ladder.top.crf == max(10, entry - 5)


def test_bd_between_predicted_and_reference(pipeline):
    code, out, _ = pipeline["steps"]["bd"]
    assert code == 0
    lines = {ln.split(":")[0]: ln for ln in out.splitlines()}
    assert "bd-rate" in lines and "bd-vmaf" in lines and "vmaf overlap" in lines
    bd_rate = float(lines["bd-rate"].split()[1].rstrip("%"))
    bd_vmaf = float(lines["bd-vmaf"].split()[1])
    assert abs(bd_rate) < 0.5
    assert abs(bd_vmaf) < 0.25


def test_report_summarizes_both_modes(pipeline):
    code, out, _ = pipeline["steps"]["report"]
    assert code == 0
    assert "report written to" in out
    report = json.loads((pipeline["runs"] / "report" / "report.json").read_text())
    assert report["modes"] == ["predicted", "predicted_nohq"]
    # "scenes" counts the run's scene union; only the swept scene has a
    # reference ladder to diff against
    assert report["summary"]["predicted"]["scenes"] == 2
    assert report["summary"]["predicted"]["scenes_with_bd"] == 1
    assert report["summary"]["predicted_nohq"]["scenes"] == 2
    assert report["summary"]["predicted_nohq"]["scenes_with_bd"] == 1
    fresh_id = pipeline["fresh"].scene_id
    assert report["scenes"][fresh_id]["modes"]["predicted"]["bd"]["status"] == "reference-unavailable"
    assert (pipeline["runs"] / "report" / "bd_values.csv").exists()


def test_out_of_range_step_factor_is_a_usage_error(tmp_path):
    code, _, err = run_cli(
        "reference", "--sweeps", tmp_path, "--out", tmp_path / "out", "--k", "2.5"
    )
    assert code == 2
    assert "step factor" in err


def test_missing_config_is_a_usage_error(tmp_path):
    code, _, err = run_cli(
        "sweep", "--config", tmp_path / "nope.toml", "--out", tmp_path / "out"
    )
    assert code == 2
    assert "error:" in err


def test_unknown_sweep_scene_is_a_usage_error(pipeline):
    code, _, err = run_cli(
        "sweep", "--config", pipeline["config"],
        "--out", pipeline["root"] / "unused", "--scenes", "scene999",
    )
    assert code == 2
    assert "scene999" in err


def test_unknown_prediction_scene_is_a_usage_error(pipeline):
    code, _, err = run_cli(
        "predict", "--config", pipeline["config"],
        "--predictions", pipeline["gt_path"],
        "--calibration", pipeline["calibration"],
        "--out", pipeline["root"] / "unused", "--scenes", "scene999",
    )
    assert code == 2
    assert "no predictions" in err


def test_failing_pre_encode_maps_to_tool_exit(pipeline, tmp_path, monkeypatch):
    # fresh cache so the failure is not masked by earlier sweep entries
    config = write_config(
        tmp_path / "config.toml",
        str(tmp_path / "cache"),
        str(pipeline["root"] / "scenes.json"),
    )
    params = pipeline["swept"]
    monkeypatch.setenv("MOCK_ENCODER_FAIL_CRF", str(synthetic.hq_crf(params)))
    code, _, err = run_cli(
        "predict", "--config", config,
        "--predictions", pipeline["gt_path"],
        "--calibration", pipeline["calibration"],
        "--out", tmp_path / "out", "--scenes", params.scene_id,
    )
    assert code == 3
    assert "error:" in err
    assert not (tmp_path / "out" / f"{params.scene_id}.ladder.csv").exists()


def test_sweep_with_unreadable_source_maps_to_tool_exit(pipeline, tmp_path):
    params = pipeline["swept"]
    entry = scene_entry(params)
    entry["source_path"] = "sources/missing.json"
    (tmp_path / "scenes.json").write_text(json.dumps([entry]))
    config = write_config(
        tmp_path / "config.toml", str(tmp_path / "cache"), "scenes.json"
    )
    code, out, _ = run_cli("sweep", "--config", config, "--out", tmp_path / "out")
    assert code == 3
    assert "168 failures" in out
    sidecar = json.loads((tmp_path / "out" / f"{params.scene_id}.json").read_text())
    assert len(sidecar["failures"]) == 168


def _two_rung_ladder(scene_id: str, rates: tuple[float, float], vmafs: tuple[float, float]) -> BitrateLadder:
    return BitrateLadder(
        scene_id=scene_id,
        rungs=(
            LadderRung(S1, 20, rates[0], vmafs[0]),
            LadderRung(S2, 26, rates[1], vmafs[1]),
        ),
    )


def test_bd_without_overlap_maps_to_exit_4(tmp_path):
    save_ladder(_two_rung_ladder("a", (4000.0, 1000.0), (90.0, 80.0)), tmp_path / "a.ladder.csv")
    save_ladder(_two_rung_ladder("b", (300.0, 100.0), (50.0, 40.0)), tmp_path / "b.ladder.csv")
    code, out, _ = run_cli(
        "bd", "--test", tmp_path / "a.ladder.csv", "--reference", tmp_path / "b.ladder.csv"
    )
    assert code == 4
    assert "no-overlap" in out


def test_bd_single_rung_ladder_maps_to_exit_4(tmp_path):
    single = BitrateLadder(scene_id="a", rungs=(LadderRung(S1, 20, 4000.0, 90.0),))
    save_ladder(single, tmp_path / "a.ladder.csv")
    save_ladder(_two_rung_ladder("b", (4000.0, 1000.0), (92.0, 80.0)), tmp_path / "b.ladder.csv")
    code, _, err = run_cli(
        "bd", "--test", tmp_path / "a.ladder.csv", "--reference", tmp_path / "b.ladder.csv"
    )
    assert code == 4
    assert "no-overlap" in err
