"""Run configuration: tool templates, cache location, walk defaults.

Configs load from TOML or JSON (by extension).  Relative paths resolve
against the config file, and LADDERKIT_CACHE_DIR overrides the cache
directory for quick redirection in CI.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import SchemaError
from .ground_truth import DEFAULT_K, DEFAULT_R_MIN_KBPS
from .orchestrator import ToolSettings

CACHE_DIR_ENV = "LADDERKIT_CACHE_DIR"


@dataclass(frozen=True)
class RunConfig:
    tools: ToolSettings
    cache_dir: Path
    scenes_file: Path | None = None
    parallelism: int = 4
    k: float = DEFAULT_K
    r_min_kbps: float = DEFAULT_R_MIN_KBPS


def _load_raw(path: Path) -> dict:
    if path.suffix == ".toml":
        try:
            with path.open("rb") as fh:
                return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise SchemaError(f"config {path} is not valid TOML: {exc}") from exc
    if path.suffix == ".json":
        try:
            return json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError(f"config {path} is not valid JSON: {exc}") from exc
    raise SchemaError(f"config {path} must be .toml or .json")


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    raw = _load_raw(path)
    if not isinstance(raw, dict):
        raise SchemaError(f"config {path} must hold a table/object at top level")

    tools_raw = raw.get("tools")
    if not isinstance(tools_raw, dict):
        raise SchemaError(f"config {path} needs a [tools] section")
    try:
        tools = ToolSettings(
            encode_cmd=str(tools_raw["encode_cmd"]),
            quality_cmd=str(tools_raw["quality_cmd"]),
            encoder_version=str(tools_raw.get("encoder_version", "unknown")),
        )
    except KeyError as exc:
        raise SchemaError(f"config {path}: [tools] is missing {exc}") from exc

    run_raw = raw.get("run", {})
    if not isinstance(run_raw, dict):
        raise SchemaError(f"config {path}: [run] must be a table/object")

    cache_dir = os.environ.get(CACHE_DIR_ENV) or run_raw.get("cache_dir", "cache")
    cache_path = Path(cache_dir)
    if not cache_path.is_absolute():
        cache_path = (path.parent / cache_path).resolve()

    scenes_file = run_raw.get("scenes_file")
    scenes_path = None
    if scenes_file:
        scenes_path = Path(scenes_file)
        if not scenes_path.is_absolute():
            scenes_path = (path.parent / scenes_path).resolve()

    try:
        parallelism = int(run_raw.get("parallelism", 4))
        k = float(run_raw.get("k", DEFAULT_K))
        r_min = float(run_raw.get("r_min_kbps", DEFAULT_R_MIN_KBPS))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"config {path}: bad [run] value: {exc}") from exc
    if parallelism < 1:
        raise SchemaError(f"config {path}: parallelism must be >= 1")

    return RunConfig(
        tools=tools,
        cache_dir=cache_path,
        scenes_file=scenes_path,
        parallelism=parallelism,
        k=k,
        r_min_kbps=r_min,
    )
