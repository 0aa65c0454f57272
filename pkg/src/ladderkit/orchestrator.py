"""External encode/quality tool orchestration.

Tools are configured as command templates with named placeholders and
run without a shell.  Every encode is cached on disk keyed by scene,
resolution, CRF, and encoder version; a cache hit never re-invokes a
tool, and per-scene invocation counters track exactly the misses.
"""
from __future__ import annotations

import csv
import datetime
import hashlib
import json
import logging
import os
import re
import shlex
import subprocess
import tempfile
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SchemaError, ToolError
from .rq import CRF_GRID, CRF_MAX, CRF_MIN, RESOLUTIONS, Resolution, RQPoint, RQSweep

logger = logging.getLogger(__name__)

SWEEP_META_FORMAT = "rq-sweep-meta"
SWEEP_META_VERSION = 1
SOURCE_WIDTH = 1920
SOURCE_HEIGHT = 1080
ALLOWED_FRAME_RATES = (24.0, 30.0, 60.0)
MIN_FRAME_COUNT = 30

SWEEP_COLUMNS = ("scene_id", "resolution", "crf", "bitrate_kbps", "vmaf")


@dataclass(frozen=True)
class SceneManifest:
    """A source clip: one scene, fixed resolution and frame geometry."""

    scene_id: str
    source_path: Path
    frame_rate: float
    frame_count: int
    pix_fmt: str = "yuv420p"
    width: int = SOURCE_WIDTH
    height: int = SOURCE_HEIGHT

    def __post_init__(self):
        if float(self.frame_rate) not in ALLOWED_FRAME_RATES:
            raise ValueError(
                f"scene {self.scene_id!r}: frame rate {self.frame_rate} not in "
                f"{ALLOWED_FRAME_RATES}"
            )
        if self.frame_count < MIN_FRAME_COUNT:
            raise ValueError(
                f"scene {self.scene_id!r}: {self.frame_count} frames is below the "
                f"minimum of {MIN_FRAME_COUNT}"
            )
        if (self.width, self.height) != (SOURCE_WIDTH, SOURCE_HEIGHT):
            raise ValueError(
                f"scene {self.scene_id!r}: sources must be "
                f"{SOURCE_WIDTH}x{SOURCE_HEIGHT}, got {self.width}x{self.height}"
            )
        if not self.pix_fmt.startswith("yuv420"):
            raise ValueError(
                f"scene {self.scene_id!r}: sources must be 4:2:0, got {self.pix_fmt!r}"
            )

    @property
    def duration_s(self) -> float:
        return self.frame_count / float(self.frame_rate)


def load_scene_manifests(path: Path | str) -> list[SceneManifest]:
    """Read a JSON list of scene manifests; paths resolve against the file."""
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"scene manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise SchemaError(f"scene manifest {path} must hold a JSON list")
    out = []
    for i, entry in enumerate(entries):
        try:
            out.append(
                SceneManifest(
                    scene_id=str(entry["scene_id"]),
                    source_path=(path.parent / entry["source_path"]).resolve(),
                    frame_rate=float(entry["frame_rate"]),
                    frame_count=int(entry["frame_count"]),
                    pix_fmt=str(entry.get("pix_fmt", "yuv420p")),
                    width=int(entry.get("width", SOURCE_WIDTH)),
                    height=int(entry.get("height", SOURCE_HEIGHT)),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad scene manifest entry at index {i}: {exc}") from exc
    return out


@dataclass(frozen=True)
class ToolSettings:
    """Command templates for the encoder and the quality tool.

    encode_cmd placeholders: {input} {output} {width} {height} {crf}.
    quality_cmd placeholders: {encoded} {source} {width} {height}, where
    width/height are the source dimensions (quality is measured against
    the full-resolution source).
    """

    encode_cmd: str
    quality_cmd: str
    encoder_version: str = "unknown"

    def hashes(self) -> dict[str, str]:
        return {
            "encode": hashlib.sha256(self.encode_cmd.encode()).hexdigest(),
            "quality": hashlib.sha256(self.quality_cmd.encode()).hexdigest(),
        }


@dataclass(frozen=True)
class EncodeRecord:
    """One completed encode, as cached on disk."""

    scene_id: str
    resolution: Resolution
    crf: int
    bitrate_kbps: float
    vmaf: float | None
    encoder_version: str
    created_utc: str

    def to_rq_point(self) -> RQPoint:
        if self.vmaf is None:
            raise ValueError(
                f"{self.scene_id} {self.resolution.label}@crf{self.crf} has no vmaf"
            )
        return RQPoint(
            resolution=self.resolution,
            crf=self.crf,
            bitrate_kbps=self.bitrate_kbps,
            vmaf=self.vmaf,
        )


def _fill_template(template: str, values: dict) -> list[str]:
    try:
        filled = template.format(**values)
    except (KeyError, IndexError) as exc:
        raise ToolError(f"bad placeholder in tool template: {exc}", command=template)
    return shlex.split(filled)


def _parse_quality_output(stdout: str) -> float:
    """Pull the quality score out of tool stdout.

    Accepts a JSON object with a top-level "vmaf" number or the pooled
    metrics layout ("pooled_metrics" -> "vmaf" -> "mean"), or stdout that
    is (or ends with) a bare number.
    """
    text = stdout.strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        obj = None
    if isinstance(obj, dict):
        if isinstance(obj.get("vmaf"), (int, float)):
            return float(obj["vmaf"])
        pooled = obj.get("pooled_metrics")
        if isinstance(pooled, dict):
            entry = pooled.get("vmaf")
            if isinstance(entry, dict) and isinstance(entry.get("mean"), (int, float)):
                return float(entry["mean"])
    elif isinstance(obj, (int, float)):
        return float(obj)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines:
        try:
            return float(lines[-1].strip())
        except ValueError:
            pass
    raise ToolError("unparsable quality tool output", stdout=stdout)


def _safe_version(version: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", version) or "unknown"


class EncodeOrchestrator:
    """Runs encodes through the configured tools with caching."""

    def __init__(
        self,
        tools: ToolSettings,
        cache_dir: Path | str,
        *,
        work_dir: Path | str | None = None,
        parallelism: int = 4,
        measure_quality: bool = True,
        keep_outputs: bool = False,
    ):
        if parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {parallelism}")
        self.tools = tools
        self.cache_dir = Path(cache_dir)
        self.work_dir = Path(work_dir) if work_dir else Path(tempfile.mkdtemp(prefix="ladderkit-"))
        self.parallelism = parallelism
        self.measure_quality = measure_quality
        self.keep_outputs = keep_outputs
        self._counters: dict[tuple[str, str], int] = {}
        self._counter_lock = threading.Lock()
        self._key_locks: dict[Path, threading.Lock] = {}
        self._key_locks_guard = threading.Lock()
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.work_dir.mkdir(parents=True, exist_ok=True)

    # -- cache ---------------------------------------------------------

    def _cache_path(self, manifest: SceneManifest, resolution: Resolution, crf: int) -> Path:
        name = f"{resolution.label}_crf{crf:02d}_{_safe_version(self.tools.encoder_version)}.json"
        return self.cache_dir / manifest.scene_id / name

    def _lock_for(self, path: Path) -> threading.Lock:
        with self._key_locks_guard:
            return self._key_locks.setdefault(path, threading.Lock())

    def _read_cache(self, path: Path, manifest: SceneManifest) -> EncodeRecord | None:
        if not path.exists():
            return None
        try:
            obj = json.loads(path.read_text())
            return EncodeRecord(
                scene_id=str(obj["scene_id"]),
                resolution=Resolution.from_label(obj["resolution"]),
                crf=int(obj["crf"]),
                bitrate_kbps=float(obj["bitrate_kbps"]),
                vmaf=None if obj.get("vmaf") is None else float(obj["vmaf"]),
                encoder_version=str(obj["encoder_version"]),
                created_utc=str(obj["created_utc"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            logger.warning("discarding unreadable cache entry %s: %s", path, exc)
            return None

    def _write_cache(self, path: Path, record: EncodeRecord) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "scene_id": record.scene_id,
            "resolution": record.resolution.label,
            "crf": record.crf,
            "bitrate_kbps": record.bitrate_kbps,
            "vmaf": record.vmaf,
            "encoder_version": record.encoder_version,
            "created_utc": record.created_utc,
        }
        tmp = path.with_name(path.name + f".{uuid.uuid4().hex}.tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True))
        os.replace(tmp, path)

    # -- counters ------------------------------------------------------

    def _bump(self, scene_id: str, phase: str) -> None:
        with self._counter_lock:
            key = (scene_id, phase)
            self._counters[key] = self._counters.get(key, 0) + 1

    def invocations(self, scene_id: str, phase: str | None = None) -> int:
        """Tool invocation count for a scene, optionally one phase only."""
        with self._counter_lock:
            return sum(
                n
                for (scene, ph), n in self._counters.items()
                if scene == scene_id and (phase is None or ph == phase)
            )

    # -- tool execution ------------------------------------------------

    def _run_tool(self, argv: list[str]) -> subprocess.CompletedProcess:
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as exc:
            raise ToolError(f"failed to launch tool: {exc}", command=shlex.join(argv))
        if proc.returncode != 0:
            raise ToolError(
                "tool exited with an error",
                command=shlex.join(argv),
                returncode=proc.returncode,
                stdout=proc.stdout,
                stderr=proc.stderr,
            )
        return proc

    def run_encode(
        self,
        manifest: SceneManifest,
        resolution: Resolution,
        crf: int,
        phase: str = "adhoc",
    ) -> EncodeRecord:
        """Encode one operating point, measuring bitrate and quality.

        Serves from the cache when possible; concurrent requests for the
        same point are serialized so the tools run at most once per key.
        """
        if not isinstance(crf, int) or not CRF_MIN <= crf <= CRF_MAX:
            raise ValueError(f"crf must be an integer in [{CRF_MIN}, {CRF_MAX}], got {crf!r}")
        cache_path = self._cache_path(manifest, resolution, crf)
        record = self._read_cache(cache_path, manifest)
        if record is not None:
            return record
        with self._lock_for(cache_path):
            record = self._read_cache(cache_path, manifest)
            if record is not None:
                return record
            record = self._execute(manifest, resolution, crf)
            self._write_cache(cache_path, record)
            self._bump(manifest.scene_id, phase)
            return record

    def _execute(self, manifest: SceneManifest, resolution: Resolution, crf: int) -> EncodeRecord:
        out_name = f"{manifest.scene_id}_{resolution.label}_crf{crf:02d}_{uuid.uuid4().hex}.bin"
        out_path = self.work_dir / out_name
        try:
            self._run_tool(
                _fill_template(
                    self.tools.encode_cmd,
                    {
                        "input": manifest.source_path,
                        "output": out_path,
                        "width": resolution.width,
                        "height": resolution.height,
                        "crf": crf,
                    },
                )
            )
            if not out_path.exists():
                raise ToolError(
                    f"encoder produced no output at {out_path}",
                    command=self.tools.encode_cmd,
                )
            size_bytes = out_path.stat().st_size
            bitrate_kbps = size_bytes * 8.0 / manifest.duration_s / 1000.0
            vmaf = None
            if self.measure_quality:
                proc = self._run_tool(
                    _fill_template(
                        self.tools.quality_cmd,
                        {
                            "encoded": out_path,
                            "source": manifest.source_path,
                            "width": manifest.width,
                            "height": manifest.height,
                        },
                    )
                )
                vmaf = _parse_quality_output(proc.stdout)
        finally:
            if not self.keep_outputs:
                try:
                    out_path.unlink(missing_ok=True)
                except OSError:
                    pass
        return EncodeRecord(
            scene_id=manifest.scene_id,
            resolution=resolution,
            crf=crf,
            bitrate_kbps=bitrate_kbps,
            vmaf=vmaf,
            encoder_version=self.tools.encoder_version,
            created_utc=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )

    # -- sweeps --------------------------------------------------------

    def exhaustive_sweep(
        self, manifest: SceneManifest
    ) -> tuple[RQSweep, list[dict]]:
        """Encode the full CRF grid at every resolution.

        Failed cells are reported, not fatal: the sweep comes back with
        holes plus a failure list.
        """
        jobs = [(res, crf) for res in RESOLUTIONS for crf in CRF_GRID]
        results: dict[tuple[Resolution, int], EncodeRecord] = {}
        failures: list[dict] = []
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            futures = {
                pool.submit(self.run_encode, manifest, res, crf, "sweep"): (res, crf)
                for res, crf in jobs
            }
            for future, (res, crf) in futures.items():
                try:
                    results[(res, crf)] = future.result()
                except Exception as exc:
                    logger.error(
                        "sweep cell %s@crf%d failed: %s", res.label, crf, exc
                    )
                    failures.append(
                        {"resolution": res.label, "crf": crf, "error": str(exc)}
                    )
        points = tuple(
            results[(res, crf)].to_rq_point()
            for res in RESOLUTIONS
            for crf in CRF_GRID
            if (res, crf) in results
        )
        return RQSweep(scene_id=manifest.scene_id, points=points), failures


# -- sweep store -------------------------------------------------------


def sweep_csv_path(store_dir: Path | str, scene_id: str) -> Path:
    return Path(store_dir) / f"{scene_id}.csv"


def save_sweep(
    sweep: RQSweep,
    store_dir: Path | str,
    *,
    tools: ToolSettings,
    failures: Sequence[dict] = (),
) -> Path:
    """Write one scene's sweep as canonical CSV plus a JSON sidecar.

    Rows are sorted by resolution rank then CRF and floats keep their
    shortest round-trip form, so equal sweeps serialize byte-identically.
    """
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    csv_path = sweep_csv_path(store_dir, sweep.scene_id)
    rows = sorted(sweep.points, key=lambda p: (p.resolution.rank, p.crf))
    tmp = csv_path.with_name(csv_path.name + f".{uuid.uuid4().hex}.tmp")
    with tmp.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for p in rows:
            writer.writerow(
                [sweep.scene_id, p.resolution.label, p.crf, repr(p.bitrate_kbps), repr(p.vmaf)]
            )
    os.replace(tmp, csv_path)

    sidecar = {
        "format": SWEEP_META_FORMAT,
        "version": SWEEP_META_VERSION,
        "scene_id": sweep.scene_id,
        "encoder_version": tools.encoder_version,
        "tool_hashes": tools.hashes(),
        "quality_reference": "source-1080p",
        "points": len(sweep.points),
        "failures": list(failures),
    }
    sidecar_path = csv_path.with_suffix(".json")
    tmp = sidecar_path.with_name(sidecar_path.name + f".{uuid.uuid4().hex}.tmp")
    tmp.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, sidecar_path)
    return csv_path


def load_sweep(csv_path: Path | str) -> RQSweep:
    """Read a sweep CSV back; bitrates and vmaf round-trip exactly."""
    csv_path = Path(csv_path)
    points = []
    scene_id = None
    with csv_path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SWEEP_COLUMNS:
            raise SchemaError(
                f"{csv_path}: expected columns {','.join(SWEEP_COLUMNS)}, "
                f"got {reader.fieldnames}"
            )
        for i, row in enumerate(reader):
            try:
                scene_id = row["scene_id"] if scene_id is None else scene_id
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
    if scene_id is None:
        raise SchemaError(f"{csv_path}: sweep file has no rows")
    return RQSweep(scene_id=scene_id, points=tuple(points))


def discover_sweeps(store_dir: Path | str) -> list[Path]:
    return sorted(Path(store_dir).glob("*.csv"))


# -- complexity accounting ---------------------------------------------

EXHAUSTIVE_BASELINE = len(CRF_GRID) * len(RESOLUTIONS)


@dataclass(frozen=True)
class ComplexityEntry:
    """Encode counts for one scene against the exhaustive baseline."""

    scene_id: str
    pre_encodes: int
    rung_encodes: int

    @property
    def total(self) -> int:
        return self.pre_encodes + self.rung_encodes

    @property
    def reduction_percent(self) -> float:
        return 100.0 * (1.0 - self.total / EXHAUSTIVE_BASELINE)


def summarize_complexity(entries: Iterable[ComplexityEntry]) -> dict:
    entries = list(entries)
    if not entries:
        return {"scenes": 0}
    totals = [e.total for e in entries]
    reductions = [e.reduction_percent for e in entries]
    return {
        "scenes": len(entries),
        "mean_total_encodes": sum(totals) / len(totals),
        "max_total_encodes": max(totals),
        "mean_reduction_percent": sum(reductions) / len(reductions),
        "exhaustive_baseline": EXHAUSTIVE_BASELINE,
    }
