"""Predicted-ladder construction from four CRFs and a calibration.

The predicted entry CRFs (one high-quality CRF for 1080p plus the entry
CRF of each lower resolution) and the calibration's crossover maps pin
down seven pre-encodes.  Their measured bitrates yield a per-resolution
CRF/log-rate model and a bitrate range per resolution, and the ladder is
then walked downward exactly like the reference walk, encoding each rung
on demand and reusing pre-encodes when a rung lands on one.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .crf_rate import (
    Calibration,
    CrfRateModel,
    FIT_SLOPE_INFERRED,
    crf_for_bitrate,
    fit_crf_rate,
    infer_crossover_high,
)
from .errors import PredictionAborted, SchemaError
from .ground_truth import (
    DEFAULT_HQ_VMAF,
    DEFAULT_K,
    DEFAULT_R_MIN_KBPS,
    BitrateLadder,
    LadderRung,
)
from .ground_truth import _validate_walk_params
from .rq import CRF_MAX, CRF_MIN, RESOLUTIONS, Resolution, RQPoint

logger = logging.getLogger(__name__)

PREDICTIONS_FORMAT = "predicted-entry-crfs"
PREDICTIONS_VERSION = 1

PURPOSE_HQ = "hq"
PURPOSE_LOW = "low-crossover"
PURPOSE_HIGH = "high-crossover"

DEFAULT_HQ_FALLBACK_STEP = 5

EncodeFn = Callable[[Resolution, int], RQPoint]


@dataclass(frozen=True)
class PredictedCrfs:
    """The four predicted entry CRFs for one scene.

    crf_hq_s1 is the 1080p high-quality CRF; the other three are the
    entry (low) CRFs of 720p, 480p and 360p.  In the no-HQ ablation the
    first slot carries the predicted 1080p entry CRF instead and the
    provenance says so.
    """

    scene_id: str
    crf_hq_s1: int
    crf_low_s2: int
    crf_low_s3: int
    crf_low_s4: int
    provenance: str = "file"

    def __post_init__(self):
        for name in ("crf_hq_s1", "crf_low_s2", "crf_low_s3", "crf_low_s4"):
            value = getattr(self, name)
            if not isinstance(value, int) or not CRF_MIN <= value <= CRF_MAX:
                raise ValueError(
                    f"{name}={value!r} must be an integer in [{CRF_MIN}, {CRF_MAX}]"
                )

    def entry_crf(self, resolution: Resolution) -> int:
        return {
            Resolution.P1080: self.crf_hq_s1,
            Resolution.P720: self.crf_low_s2,
            Resolution.P480: self.crf_low_s3,
            Resolution.P360: self.crf_low_s4,
        }[resolution]


def predictions_to_json(predictions: Sequence[PredictedCrfs]) -> dict:
    return {
        "format": PREDICTIONS_FORMAT,
        "version": PREDICTIONS_VERSION,
        "scenes": [
            {
                "scene_id": p.scene_id,
                "crf_hq_s1": p.crf_hq_s1,
                "crf_low_s2": p.crf_low_s2,
                "crf_low_s3": p.crf_low_s3,
                "crf_low_s4": p.crf_low_s4,
                "provenance": p.provenance,
            }
            for p in predictions
        ],
    }


def predictions_from_json(obj: dict) -> list[PredictedCrfs]:
    if not isinstance(obj, dict):
        raise SchemaError("predictions file must hold a JSON object")
    if obj.get("format") != PREDICTIONS_FORMAT:
        raise SchemaError(
            f"unrecognized predictions format {obj.get('format')!r}; "
            f"expected {PREDICTIONS_FORMAT!r}"
        )
    if obj.get("version") != PREDICTIONS_VERSION:
        raise SchemaError(
            f"unsupported predictions version {obj.get('version')!r}"
        )
    scenes = obj.get("scenes")
    if not isinstance(scenes, list):
        raise SchemaError("predictions file needs a 'scenes' list")
    out = []
    for i, entry in enumerate(scenes):
        try:
            out.append(
                PredictedCrfs(
                    scene_id=str(entry["scene_id"]),
                    crf_hq_s1=int(entry["crf_hq_s1"]),
                    crf_low_s2=int(entry["crf_low_s2"]),
                    crf_low_s3=int(entry["crf_low_s3"]),
                    crf_low_s4=int(entry["crf_low_s4"]),
                    provenance=str(entry.get("provenance", "file")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad predictions entry at index {i}: {exc}") from exc
    return out


def save_predictions(predictions: Sequence[PredictedCrfs], path: Path | str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(predictions_to_json(predictions), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def load_predictions(path: Path | str) -> list[PredictedCrfs]:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"predictions file {path} is not valid JSON: {exc}") from exc
    return predictions_from_json(obj)


@dataclass(frozen=True)
class PreEncodeJob:
    resolution: Resolution
    crf: int
    purpose: str


@dataclass(frozen=True)
class PreEncodePlan:
    """The seven encodes that seed per-resolution models."""

    jobs: tuple[PreEncodeJob, ...]
    warnings: tuple[str, ...] = ()

    def job(self, resolution: Resolution, purpose: str) -> PreEncodeJob:
        for j in self.jobs:
            if j.resolution is resolution and j.purpose == purpose:
                return j
        raise KeyError(f"no {purpose} job for {resolution.label}")


def fallback_first_rung(crf_low_s1: int, step: int = DEFAULT_HQ_FALLBACK_STEP) -> int:
    """First-rung CRF when no high-quality CRF is available: back off the
    1080p entry CRF by a fixed step, clamped to the grid."""
    if step < 0:
        raise ValueError(f"fallback step must be non-negative, got {step}")
    return min(CRF_MAX, max(CRF_MIN, crf_low_s1 - step))


def plan_pre_encodes(predicted: PredictedCrfs, calibration: Calibration) -> PreEncodePlan:
    """Lay out the seven pre-encode jobs for one scene.

    Per resolution except the last: the entry CRF (the 1080p slot doubles
    as its low anchor) plus an exit CRF inferred from the next
    resolution's entry CRF through the calibration.  The last resolution
    gets only its entry CRF.  An inferred exit CRF that fails to exceed
    the resolution's own low anchor is pushed one grid step above it so
    the two-point fit stays solvable.
    """
    warnings: list[str] = []
    anchors = {
        Resolution.P1080: predicted.crf_hq_s1,
        Resolution.P720: predicted.crf_low_s2,
        Resolution.P480: predicted.crf_low_s3,
    }
    next_entry = {
        Resolution.P1080: predicted.crf_low_s2,
        Resolution.P720: predicted.crf_low_s3,
        Resolution.P480: predicted.crf_low_s4,
    }
    highs: dict[Resolution, int] = {}
    for res in (Resolution.P1080, Resolution.P720, Resolution.P480):
        query = infer_crossover_high(calibration, res, next_entry[res])
        crf_high = query.crf
        if query.clamped:
            warnings.append(
                f"{res.label}: inferred exit crf {query.raw:.2f} clamped to {crf_high}"
            )
        if crf_high <= anchors[res]:
            adjusted = min(CRF_MAX, anchors[res] + 1)
            warnings.append(
                f"{res.label}: inferred exit crf {crf_high} does not exceed "
                f"anchor {anchors[res]}; using {adjusted}"
            )
            crf_high = adjusted
        highs[res] = crf_high

    jobs = (
        PreEncodeJob(Resolution.P1080, predicted.crf_hq_s1, PURPOSE_HQ),
        PreEncodeJob(Resolution.P1080, highs[Resolution.P1080], PURPOSE_HIGH),
        PreEncodeJob(Resolution.P720, predicted.crf_low_s2, PURPOSE_LOW),
        PreEncodeJob(Resolution.P720, highs[Resolution.P720], PURPOSE_HIGH),
        PreEncodeJob(Resolution.P480, predicted.crf_low_s3, PURPOSE_LOW),
        PreEncodeJob(Resolution.P480, highs[Resolution.P480], PURPOSE_HIGH),
        PreEncodeJob(Resolution.P360, predicted.crf_low_s4, PURPOSE_LOW),
    )
    return PreEncodePlan(jobs=jobs, warnings=tuple(warnings))


@dataclass(frozen=True)
class ResolutionRange:
    """The bitrate span a resolution is expected to serve.

    rate_low_kbps of the last resolution is 0: it owns everything below
    its measured entry rate.
    """

    resolution: Resolution
    rate_low_kbps: float
    rate_high_kbps: float

    def contains(self, rate_kbps: float) -> bool:
        return self.rate_low_kbps <= rate_kbps <= self.rate_high_kbps


def sanitize_ranges(
    raw: Mapping[Resolution, tuple[float, float]]
) -> tuple[tuple[ResolutionRange, ...], tuple[str, ...]]:
    """Order ranges top resolution first and repair geometry.

    Within a resolution, a low bound at or above the high bound collapses
    to just below it.  Adjacent ranges that overlap are split at the
    midpoint of the overlap.  Every repair is recorded as a warning.
    """
    warnings: list[str] = []
    lows: dict[Resolution, float] = {}
    highs: dict[Resolution, float] = {}
    for res in RESOLUTIONS:
        lo, hi = raw[res]
        if lo > 0 and lo >= hi:
            fixed = hi * (1.0 - 1e-9)
            warnings.append(
                f"{res.label}: range inverted (low {lo:.3f} >= high {hi:.3f}); "
                f"collapsed low to {fixed:.3f}"
            )
            lo = fixed
        lows[res], highs[res] = lo, hi

    for upper, lower in zip(RESOLUTIONS, RESOLUTIONS[1:]):
        if highs[lower] > lows[upper]:
            mid = 0.5 * (highs[lower] + lows[upper])
            warnings.append(
                f"{lower.label}/{upper.label}: ranges overlap "
                f"({highs[lower]:.3f} > {lows[upper]:.3f}); split at {mid:.3f}"
            )
            highs[lower] = mid
            lows[upper] = mid
            if lows[upper] >= highs[upper]:
                fixed = highs[upper] * (1.0 - 1e-9)
                warnings.append(
                    f"{upper.label}: overlap repair re-inverted range; "
                    f"collapsed low to {fixed:.3f}"
                )
                lows[upper] = fixed
            if lows[lower] > 0 and lows[lower] >= highs[lower]:
                fixed = highs[lower] * (1.0 - 1e-9)
                warnings.append(
                    f"{lower.label}: overlap repair re-inverted range; "
                    f"collapsed low to {fixed:.3f}"
                )
                lows[lower] = fixed

    ranges = tuple(
        ResolutionRange(res, lows[res], highs[res]) for res in RESOLUTIONS
    )
    return ranges, tuple(warnings)


def select_resolution(
    ranges: Sequence[ResolutionRange], target_kbps: float
) -> Resolution:
    """Pick the resolution whose range serves a target bitrate.

    Containment wins, with shared boundaries going to the higher
    resolution.  Targets above every range take the top resolution,
    below every range the bottom one.  A target in an interior gap goes
    to the nearest range boundary, ties to the higher resolution.
    """
    if not target_kbps > 0:
        raise ValueError(f"target bitrate must be positive, got {target_kbps}")
    ordered = sorted(ranges, key=lambda r: r.resolution.rank)
    if target_kbps > ordered[0].rate_high_kbps:
        return ordered[0].resolution
    for r in ordered:
        if r.contains(target_kbps):
            return r.resolution
    if target_kbps < ordered[-1].rate_low_kbps:
        return ordered[-1].resolution

    def gap_distance(r: ResolutionRange) -> float:
        return min(
            abs(target_kbps - r.rate_low_kbps), abs(target_kbps - r.rate_high_kbps)
        )

    return min(ordered, key=lambda r: (gap_distance(r), r.resolution.rank)).resolution


@dataclass(frozen=True)
class DerivedModels:
    """Per-resolution rate models plus the ranges they were fit over."""

    models: Mapping[Resolution, CrfRateModel]
    ranges: tuple[ResolutionRange, ...]
    warnings: tuple[str, ...]


def derive_models(
    plan: PreEncodePlan,
    results: Mapping[tuple[Resolution, int], RQPoint],
    calibration: Calibration,
) -> DerivedModels:
    """Fit one rate model per resolution from the pre-encode results.

    The top three resolutions get exact two-point fits from their anchor
    pair.  The bottom resolution has one encode: its slope is inferred
    from the 480p slope through the calibration and the intercept is
    anchored on the single measured point.
    """

    def result_for(res: Resolution, purpose: str) -> RQPoint:
        job = plan.job(res, purpose)
        try:
            return results[(job.resolution, job.crf)]
        except KeyError:
            raise KeyError(
                f"missing pre-encode result for {res.label}@crf{job.crf}"
            ) from None

    models: dict[Resolution, CrfRateModel] = {}
    raw_ranges: dict[Resolution, tuple[float, float]] = {}

    low_purpose = {
        Resolution.P1080: PURPOSE_HQ,
        Resolution.P720: PURPOSE_LOW,
        Resolution.P480: PURPOSE_LOW,
    }
    for res in (Resolution.P1080, Resolution.P720, Resolution.P480):
        low = result_for(res, low_purpose[res])
        high = result_for(res, PURPOSE_HIGH)
        models[res] = fit_crf_rate(
            res, [(low.crf, low.bitrate_kbps), (high.crf, high.bitrate_kbps)]
        )
        raw_ranges[res] = (high.bitrate_kbps, low.bitrate_kbps)

    slope_map = calibration.slope_map(Resolution.P360)
    zeta_360 = slope_map.apply(models[Resolution.P480].zeta)
    entry = result_for(Resolution.P360, PURPOSE_LOW)
    delta_360 = entry.crf - zeta_360 * math.log2(entry.bitrate_kbps)
    model_360 = CrfRateModel(
        Resolution.P360, float(zeta_360), float(delta_360), FIT_SLOPE_INFERRED
    )
    if not model_360.physical:
        logger.warning("360p: inferred slope %.4f is non-negative", zeta_360)
    models[Resolution.P360] = model_360
    raw_ranges[Resolution.P360] = (0.0, entry.bitrate_kbps)

    ranges, warnings = sanitize_ranges(raw_ranges)
    return DerivedModels(models=models, ranges=ranges, warnings=warnings)


@dataclass(frozen=True)
class PredictionOutcome:
    """A predicted ladder plus its encode accounting."""

    ladder: BitrateLadder
    plan: PreEncodePlan
    derived: DerivedModels
    pre_encodes: int
    rung_encodes: int
    warnings: tuple[str, ...]

    @property
    def total_encodes(self) -> int:
        return self.pre_encodes + self.rung_encodes


def build_predicted_ladder(
    scene_id: str,
    hq_result: RQPoint,
    derived: DerivedModels,
    encode: EncodeFn,
    *,
    pre_encoded: Mapping[tuple[Resolution, int], RQPoint] | None = None,
    k: float = DEFAULT_K,
    r_min_kbps: float = DEFAULT_R_MIN_KBPS,
) -> tuple[BitrateLadder, int]:
    """Walk the predicted models downward from the first rung.

    Same walk as the reference ladder, but each rung is realised by
    selecting a resolution for the target, inverting that resolution's
    model to a grid CRF, and encoding.  Rungs that land on a pre-encode
    reuse its result; ``encode`` is invoked once per novel (resolution,
    crf) pair and the invocation count is returned.

    Raises PredictionAborted (carrying the rows built so far) when the
    encode callback fails mid-walk.
    """
    _validate_walk_params(k, r_min_kbps)
    cache: dict[tuple[Resolution, int], RQPoint] = dict(pre_encoded or {})
    encodes = 0

    rungs = [
        LadderRung(
            resolution=hq_result.resolution,
            crf=hq_result.crf,
            bitrate_kbps=hq_result.bitrate_kbps,
            vmaf=hq_result.vmaf,
        )
    ]
    used = {(hq_result.resolution, hq_result.crf)}
    target = hq_result.bitrate_kbps / k
    while target >= r_min_kbps:
        res = select_resolution(derived.ranges, target)
        key = (res, crf_for_bitrate(derived.models[res], target).crf)
        if key in cache:
            point = cache[key]
        else:
            try:
                point = encode(*key)
            except Exception as exc:
                raise PredictionAborted(
                    f"scene {scene_id!r}: encode failed for "
                    f"{key[0].label}@crf{key[1]}: {exc}",
                    partial_rungs=rungs,
                    cause=exc,
                ) from exc
            encodes += 1
            cache[key] = point
        if point.bitrate_kbps < r_min_kbps:
            break
        if key not in used and point.bitrate_kbps < rungs[-1].bitrate_kbps:
            rungs.append(
                LadderRung(
                    resolution=point.resolution,
                    crf=point.crf,
                    bitrate_kbps=point.bitrate_kbps,
                    vmaf=point.vmaf,
                )
            )
            used.add(key)
            target = point.bitrate_kbps / k
        else:
            target = target / k

    ladder = BitrateLadder(
        scene_id=scene_id, rungs=tuple(rungs), k_step=k, r_min_kbps=r_min_kbps
    )
    return ladder, encodes


def predict_ladder(
    predicted: PredictedCrfs,
    calibration: Calibration,
    encode: EncodeFn,
    *,
    k: float = DEFAULT_K,
    r_min_kbps: float = DEFAULT_R_MIN_KBPS,
    use_hq: bool = True,
    hq_fallback_step: int = DEFAULT_HQ_FALLBACK_STEP,
) -> PredictionOutcome:
    """Run the full prediction pipeline for one scene.

    With ``use_hq`` off the first slot is treated as the 1080p entry CRF
    and the first rung backs off from it by ``hq_fallback_step``; nothing
    else changes.
    """
    if not use_hq:
        predicted = replace(
            predicted,
            crf_hq_s1=fallback_first_rung(predicted.crf_hq_s1, hq_fallback_step),
            provenance="fallback",
        )
    plan = plan_pre_encodes(predicted, calibration)

    results: dict[tuple[Resolution, int], RQPoint] = {}
    pre_encodes = 0
    for job in plan.jobs:
        key = (job.resolution, job.crf)
        if key in results:
            continue
        try:
            results[key] = encode(*key)
        except Exception as exc:
            raise PredictionAborted(
                f"scene {predicted.scene_id!r}: pre-encode failed for "
                f"{job.resolution.label}@crf{job.crf}: {exc}",
                cause=exc,
            ) from exc
        pre_encodes += 1

    derived = derive_models(plan, results, calibration)
    hq_job = plan.jobs[0]
    hq_result = results[(hq_job.resolution, hq_job.crf)]
    ladder, rung_encodes = build_predicted_ladder(
        predicted.scene_id,
        hq_result,
        derived,
        encode,
        pre_encoded=results,
        k=k,
        r_min_kbps=r_min_kbps,
    )
    return PredictionOutcome(
        ladder=ladder,
        plan=plan,
        derived=derived,
        pre_encodes=pre_encodes,
        rung_encodes=rung_encodes,
        warnings=tuple(plan.warnings) + tuple(derived.warnings),
    )


@dataclass(frozen=True)
class HQDelta:
    """How far the ladder's first rung sits from the quality target."""

    delta_vmaf: float
    delta_rate_kbps: float | None
    target_vmaf: float


def hq_delta_report(
    ladder: BitrateLadder,
    *,
    rate_at_target_kbps: float | None = None,
    target_vmaf: float = DEFAULT_HQ_VMAF,
) -> HQDelta:
    """Compare the first rung against the quality target.

    delta_rate is only available when the scene's true bitrate at the
    target quality is known (from an exhaustive sweep); delta_vmaf needs
    just the rung itself.
    """
    top = ladder.top
    if top.vmaf is None:
        raise ValueError("first rung has no vmaf; cannot compare against the target")
    delta_rate = None
    if rate_at_target_kbps is not None:
        delta_rate = top.bitrate_kbps - rate_at_target_kbps
    return HQDelta(
        delta_vmaf=top.vmaf - target_vmaf,
        delta_rate_kbps=delta_rate,
        target_vmaf=target_vmaf,
    )
