"""Ground-truth extraction from exhaustive sweeps.

Given a full sweep and its Pareto front, this module extracts the
per-resolution crossover CRFs (where each resolution enters and leaves
the front), the high-quality operating point, and the reference bitrate
ladder built by walking the front downward in constant bitrate steps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping

from .errors import MissingResolutionError
from .rq import RESOLUTIONS, ParetoFront, Resolution, RQPoint, RQSweep, nearest_by_bitrate

logger = logging.getLogger(__name__)

DEFAULT_K = 2.0
K_RANGE = (1.5, 2.0)
DEFAULT_R_MIN_KBPS = 150.0
DEFAULT_HQ_VMAF = 92.0


@dataclass(frozen=True)
class CrossoverRange:
    """The CRF span a resolution occupies on the front.

    crf_low is the CRF of the resolution's highest-bitrate front point,
    crf_high the CRF of its lowest-bitrate one.  A resolution with a
    single front point has crf_low == crf_high.
    """

    resolution: Resolution
    crf_low: int
    crf_high: int
    rate_at_low_kbps: float
    rate_at_high_kbps: float

    def __post_init__(self):
        if self.crf_high < self.crf_low:
            raise ValueError("crf_high cannot be below crf_low on a valid front")


@dataclass(frozen=True)
class CrossoverSet:
    """Per-resolution crossover ranges for one scene's front."""

    scene_id: str
    ranges: tuple[CrossoverRange, ...]

    def for_resolution(self, resolution: Resolution) -> CrossoverRange | None:
        for r in self.ranges:
            if r.resolution is resolution:
                return r
        return None

    @property
    def absent(self) -> tuple[Resolution, ...]:
        present = {r.resolution for r in self.ranges}
        return tuple(res for res in RESOLUTIONS if res not in present)


def extract_crossovers(scene_id: str, front: ParetoFront) -> CrossoverSet:
    """Read each resolution's entry and exit CRFs off the front.

    A resolution absent from the front is simply omitted; callers can
    check ``CrossoverSet.absent``.
    """
    ranges = []
    for res in RESOLUTIONS:
        seg = front.for_resolution(res)
        if not seg:
            logger.warning("scene %s: resolution %s absent from the front", scene_id, res.label)
            continue
        lo_point = max(seg, key=lambda p: p.bitrate_kbps)
        hi_point = min(seg, key=lambda p: p.bitrate_kbps)
        ranges.append(
            CrossoverRange(
                resolution=res,
                crf_low=lo_point.crf,
                crf_high=hi_point.crf,
                rate_at_low_kbps=lo_point.bitrate_kbps,
                rate_at_high_kbps=hi_point.bitrate_kbps,
            )
        )
    return CrossoverSet(scene_id=scene_id, ranges=tuple(ranges))


@dataclass(frozen=True)
class HQPoint:
    """The top-resolution operating point closest to the quality target."""

    point: RQPoint
    target_vmaf: float
    reachable: bool


def extract_hq_point(sweep: RQSweep, target_vmaf: float = DEFAULT_HQ_VMAF) -> HQPoint:
    """Pick the 1080p encode whose vmaf is nearest ``target_vmaf``.

    Distance ties go to the lower bitrate.  When every 1080p point sits
    below the target the nearest point is still returned, flagged
    unreachable.
    """
    candidates = sweep.for_resolution(Resolution.P1080)
    if not candidates:
        raise MissingResolutionError(
            f"scene {sweep.scene_id!r} has no 1080p points; cannot pick an HQ point"
        )
    best = min(candidates, key=lambda p: (abs(p.vmaf - target_vmaf), p.bitrate_kbps))
    reachable = max(p.vmaf for p in candidates) >= target_vmaf
    if not reachable:
        logger.warning(
            "scene %s: target vmaf %.1f unreachable at 1080p (max %.2f)",
            sweep.scene_id,
            target_vmaf,
            max(p.vmaf for p in candidates),
        )
    return HQPoint(point=best, target_vmaf=target_vmaf, reachable=reachable)


@dataclass(frozen=True)
class LadderRung:
    """One row of a bitrate ladder.  vmaf may be absent when quality
    measurement was skipped."""

    resolution: Resolution
    crf: int
    bitrate_kbps: float
    vmaf: float | None

    def __post_init__(self):
        if not self.bitrate_kbps > 0:
            raise ValueError("rung bitrate must be positive")


@dataclass(frozen=True)
class BitrateLadder:
    """Rungs ordered top-down: strictly decreasing bitrate, resolution
    never increasing on the way down."""

    scene_id: str
    rungs: tuple[LadderRung, ...]
    k_step: float = DEFAULT_K
    r_min_kbps: float = DEFAULT_R_MIN_KBPS

    def __post_init__(self):
        if not self.rungs:
            raise ValueError("a ladder needs at least one rung")
        for a, b in zip(self.rungs, self.rungs[1:]):
            if b.bitrate_kbps >= a.bitrate_kbps:
                raise ValueError("ladder bitrates must strictly decrease down the rows")
            if b.resolution.rank < a.resolution.rank:
                raise ValueError("ladder resolution cannot increase down the rows")

    @property
    def top(self) -> LadderRung:
        return self.rungs[0]


def _validate_walk_params(k: float, r_min_kbps: float) -> None:
    lo, hi = K_RANGE
    if not lo <= k <= hi:
        raise ValueError(f"step factor k must be within [{lo}, {hi}], got {k}")
    if not r_min_kbps > 0:
        raise ValueError(f"r_min must be positive, got {r_min_kbps}")


def build_reference_ladder(
    front: ParetoFront,
    hq: HQPoint,
    *,
    k: float = DEFAULT_K,
    r_min_kbps: float = DEFAULT_R_MIN_KBPS,
    scene_id: str = "",
) -> BitrateLadder:
    """Walk the front downward from the HQ point in steps of factor k.

    The first rung is the HQ point itself.  Each subsequent target is the
    previous rung's bitrate divided by k; the nearest front point by
    bitrate becomes the rung when it is new and actually below the
    previous rung.  A target whose nearest point was already used (or
    would not descend) is divided again, so dense front regions cannot
    stall the walk.  The walk stops when the target or the candidate
    falls below r_min.
    """
    _validate_walk_params(k, r_min_kbps)
    hq_rung = LadderRung(
        resolution=hq.point.resolution,
        crf=hq.point.crf,
        bitrate_kbps=hq.point.bitrate_kbps,
        vmaf=hq.point.vmaf,
    )
    rungs = [hq_rung]
    used = {(hq.point.resolution, hq.point.crf)}
    target = hq.point.bitrate_kbps / k
    while target >= r_min_kbps:
        cand = nearest_by_bitrate(front, target)
        if cand.bitrate_kbps < r_min_kbps:
            break
        key = (cand.resolution, cand.crf)
        if key not in used and cand.bitrate_kbps < rungs[-1].bitrate_kbps:
            rungs.append(
                LadderRung(
                    resolution=cand.resolution,
                    crf=cand.crf,
                    bitrate_kbps=cand.bitrate_kbps,
                    vmaf=cand.vmaf,
                )
            )
            used.add(key)
            target = cand.bitrate_kbps / k
        else:
            # Nearest point snapped up or repeated; keep descending.
            target = target / k
    return BitrateLadder(
        scene_id=scene_id, rungs=tuple(rungs), k_step=k, r_min_kbps=r_min_kbps
    )


@dataclass(frozen=True)
class SceneGroundTruth:
    """Everything the exhaustive pipeline knows about one scene."""

    scene_id: str
    front: ParetoFront
    crossovers: CrossoverSet
    hq: HQPoint
    ladder: BitrateLadder
    zetas: Mapping[Resolution, float]
