from __future__ import annotations

import json

import pytest

from ladderkit import Resolution, SchemaError
from ladderkit.config import CACHE_DIR_ENV, load_config
from ladderkit.ground_truth import BitrateLadder, LadderRung
from ladderkit.store import (
    load_front,
    load_ladder,
    read_json,
    save_front,
    save_ladder,
    write_json,
)

import synthetic
from pipeline_helpers import reference_artifacts


def _ladder() -> BitrateLadder:
    return BitrateLadder(
        scene_id="clip-a",
        rungs=(
            LadderRung(Resolution.P1080, 19, 4212.625, 93.5),
            LadderRung(Resolution.P720, 27, 1801.0, 86.25),
            LadderRung(Resolution.P480, 33, 640.125, None),
        ),
        k_step=1.8,
        r_min_kbps=200.0,
    )


def test_ladder_round_trip(tmp_path):
    path = tmp_path / "clip-a.ladder.csv"
    save_ladder(_ladder(), path, meta={"kind": "reference"})
    loaded = load_ladder(path)
    assert loaded == _ladder()
    sidecar = json.loads(path.with_suffix(".json").read_text())
    assert sidecar["kind"] == "reference"
    assert sidecar["rungs"] == 3
    assert sidecar["k"] == 1.8


def test_ladder_load_without_sidecar(tmp_path):
    path = tmp_path / "clip-b.csv"
    save_ladder(_ladder(), path)
    path.with_suffix(".json").unlink()
    loaded = load_ladder(path)
    assert loaded.scene_id == "clip-b"  # falls back to the file stem
    assert loaded.k_step == 2.0  # and to default walk parameters
    assert [r.bitrate_kbps for r in loaded.rungs] == [4212.625, 1801.0, 640.125]


def test_ladder_schema_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError, match="columns"):
        load_ladder(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("resolution,crf,bitrate_kbps,vmaf\n")
    with pytest.raises(SchemaError, match="no rows"):
        load_ladder(empty)
    mangled = tmp_path / "mangled.csv"
    mangled.write_text("resolution,crf,bitrate_kbps,vmaf\n1080p,notanint,100.0,90.0\n")
    with pytest.raises(SchemaError, match="row 2"):
        load_ladder(mangled)


def test_front_round_trip_exact(tmp_path):
    params = synthetic.make_scene(4)
    _, front, _, _ = reference_artifacts(params)
    path = tmp_path / "front.csv"
    save_front(front, path)
    loaded = load_front(path)
    assert loaded.points == front.points  # repr floats round-trip exactly


def test_front_schema_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("resolution,crf,bitrate_kbps,vmaf\n")
    with pytest.raises(SchemaError, match="no rows"):
        load_front(empty)


def test_json_helpers(tmp_path):
    path = tmp_path / "obj.json"
    write_json(path, {"a": 1.5, "b": [1, 2]})
    assert read_json(path) == {"a": 1.5, "b": [1, 2]}
    path.write_text("[1, 2]")
    with pytest.raises(SchemaError, match="object"):
        read_json(path)
    path.write_text("{broken")
    with pytest.raises(SchemaError):
        read_json(path)


CONFIG_TOML = """
[tools]
encode_cmd = "enc --input {input} --output {output} --width {width} --height {height} --crf {crf}"
quality_cmd = "qual --encoded {encoded} --source {source} --width {width} --height {height}"
encoder_version = "enc-9.9"

[run]
cache_dir = "cache"
scenes_file = "scenes.json"
parallelism = 2
k = 1.75
r_min_kbps = 200.0
"""


def test_config_toml_load(tmp_path, monkeypatch):
    monkeypatch.delenv(CACHE_DIR_ENV, raising=False)
    path = tmp_path / "run.toml"
    path.write_text(CONFIG_TOML)
    config = load_config(path)
    assert config.tools.encoder_version == "enc-9.9"
    assert config.cache_dir == (tmp_path / "cache").resolve()
    assert config.scenes_file == (tmp_path / "scenes.json").resolve()
    assert config.parallelism == 2
    assert config.k == 1.75
    assert config.r_min_kbps == 200.0


def test_config_cache_env_override(tmp_path, monkeypatch):
    path = tmp_path / "run.toml"
    path.write_text(CONFIG_TOML)
    monkeypatch.setenv(CACHE_DIR_ENV, str(tmp_path / "elsewhere"))
    config = load_config(path)
    assert config.cache_dir == tmp_path / "elsewhere"


def test_config_json_and_defaults(tmp_path, monkeypatch):
    monkeypatch.delenv(CACHE_DIR_ENV, raising=False)
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps({"tools": {"encode_cmd": "e {input} {output} {width} {height} {crf}",
                              "quality_cmd": "q {encoded} {source} {width} {height}"}})
    )
    config = load_config(path)
    assert config.cache_dir == (tmp_path / "cache").resolve()
    assert config.scenes_file is None
    assert config.parallelism == 4
    assert config.k == 2.0


def test_config_rejections(tmp_path):
    no_tools = tmp_path / "a.toml"
    no_tools.write_text("[run]\nparallelism = 2\n")
    with pytest.raises(SchemaError, match="tools"):
        load_config(no_tools)
    bad_suffix = tmp_path / "a.yaml"
    bad_suffix.write_text("x")
    with pytest.raises(SchemaError, match=".toml or .json"):
        load_config(bad_suffix)
    invalid = tmp_path / "b.toml"
    invalid.write_text("not toml [ =")
    with pytest.raises(SchemaError, match="TOML"):
        load_config(invalid)
    zero_par = tmp_path / "c.toml"
    zero_par.write_text(CONFIG_TOML.replace("parallelism = 2", "parallelism = 0"))
    with pytest.raises(SchemaError, match="parallelism"):
        load_config(zero_par)
