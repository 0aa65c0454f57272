"""Rate-quality geometry: operating points, sweeps, and the Pareto front.

The front is the upper-left convex hull of a scene's (bitrate, quality)
cloud: the subset of non-dominated points whose chord slopes are
non-increasing as bitrate grows.  Everything downstream (reference
ladders, crossover extraction, model fitting) operates on this hull.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable

from .errors import EmptySweepError

logger = logging.getLogger(__name__)

CRF_MIN = 10
CRF_MAX = 51
CRF_GRID: tuple[int, ...] = tuple(range(CRF_MIN, CRF_MAX + 1))
VMAF_MAX = 100.0


@enum.unique
class Resolution(enum.Enum):
    """Ladder resolutions; rank 1 (1080p) is the top of the ladder."""

    P1080 = ("1080p", 1920, 1080, 1)
    P720 = ("720p", 1280, 720, 2)
    P480 = ("480p", 854, 480, 3)
    P360 = ("360p", 640, 360, 4)

    def __init__(self, label: str, width: int, height: int, rank: int):
        self.label = label
        self.width = width
        self.height = height
        self.rank = rank

    @classmethod
    def from_label(cls, label: str) -> "Resolution":
        for res in cls:
            if res.label == label:
                return res
        raise ValueError(f"unknown resolution label: {label!r}")

    def __repr__(self) -> str:
        return f"Resolution({self.label})"


# Ordered top rank first: (1080p, 720p, 480p, 360p).
RESOLUTIONS: tuple[Resolution, ...] = tuple(sorted(Resolution, key=lambda r: r.rank))
ADJACENT_PAIRS: tuple[tuple[Resolution, Resolution], ...] = tuple(
    (RESOLUTIONS[i], RESOLUTIONS[i + 1]) for i in range(len(RESOLUTIONS) - 1)
)
COMPLETE_SWEEP_SIZE = len(CRF_GRID) * len(RESOLUTIONS)


@dataclass(frozen=True, slots=True)
class RQPoint:
    """One encode outcome in the rate-quality plane."""

    resolution: Resolution
    crf: int
    bitrate_kbps: float
    vmaf: float

    def __post_init__(self):
        if not CRF_MIN <= self.crf <= CRF_MAX:
            raise ValueError(f"crf {self.crf} outside [{CRF_MIN}, {CRF_MAX}]")
        if not self.bitrate_kbps > 0:
            raise ValueError(f"bitrate must be positive, got {self.bitrate_kbps}")
        if not 0.0 <= self.vmaf <= VMAF_MAX:
            raise ValueError(f"vmaf {self.vmaf} outside [0, {VMAF_MAX}]")


@dataclass(frozen=True)
class RQSweep:
    """A scene's encodes over the CRF grid and resolution set."""

    scene_id: str
    points: tuple[RQPoint, ...]

    def __post_init__(self):
        seen: set[tuple[Resolution, int]] = set()
        for p in self.points:
            key = (p.resolution, p.crf)
            if key in seen:
                raise ValueError(
                    f"duplicate sweep point {p.resolution.label}@crf{p.crf} "
                    f"in scene {self.scene_id!r}"
                )
            seen.add(key)

    @property
    def is_complete(self) -> bool:
        """True when every (resolution, crf) cell of the grid is present."""
        return len(self.points) == COMPLETE_SWEEP_SIZE

    def for_resolution(self, resolution: Resolution) -> tuple[RQPoint, ...]:
        return tuple(p for p in self.points if p.resolution is resolution)

    def get(self, resolution: Resolution, crf: int) -> RQPoint | None:
        for p in self.points:
            if p.resolution is resolution and p.crf == crf:
                return p
        return None


def _cross(a: RQPoint, b: RQPoint, c: RQPoint) -> float:
    """Cross product of (a->b) x (b->c) in the (bitrate, vmaf) plane.

    Positive means the path a-b-c turns left (slope increased), which a
    concave-from-above front must not do.
    """
    return (b.bitrate_kbps - a.bitrate_kbps) * (c.vmaf - b.vmaf) - (
        c.bitrate_kbps - b.bitrate_kbps
    ) * (b.vmaf - a.vmaf)


@dataclass(frozen=True)
class ParetoFront:
    """Upper-left convex hull of a point cloud, ascending in bitrate.

    Invariants checked on construction: non-empty, bitrate and vmaf both
    strictly increasing, chord slopes non-increasing (collinear runs are
    allowed, so the cross product may be zero but never positive).
    """

    points: tuple[RQPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise EmptySweepError("Pareto front cannot be empty")
        for a, b in zip(self.points, self.points[1:]):
            if b.bitrate_kbps <= a.bitrate_kbps:
                raise ValueError("front bitrates must be strictly increasing")
            if b.vmaf <= a.vmaf:
                raise ValueError("front vmaf must be strictly increasing")
        for a, b, c in zip(self.points, self.points[1:], self.points[2:]):
            if _cross(a, b, c) > 0:
                raise ValueError("front slopes must be non-increasing")

    def for_resolution(self, resolution: Resolution) -> tuple[RQPoint, ...]:
        return tuple(p for p in self.points if p.resolution is resolution)

    @property
    def min_bitrate_kbps(self) -> float:
        return self.points[0].bitrate_kbps

    @property
    def max_bitrate_kbps(self) -> float:
        return self.points[-1].bitrate_kbps


def build_pareto_front(points: Iterable[RQPoint]) -> ParetoFront:
    """Build the upper-left convex hull of ``points``.

    Ties are resolved before hull construction: among points with equal
    bitrate only the highest-vmaf one survives, and among points with
    equal vmaf only the lowest-bitrate one.  Dominated points (another
    point has bitrate <= and vmaf >=) are then discarded, and a monotone
    chain pass removes everything below the hull while keeping collinear
    hull points.

    Args:
        points: any iterable of operating points; order does not matter.

    Returns:
        The Pareto front.  Raises EmptySweepError on empty input.
    """
    pts = list(points)
    if not pts:
        raise EmptySweepError("cannot build a Pareto front from no points")

    # Equal-bitrate dedup: keep the highest vmaf.  Sorting by (bitrate,
    # -vmaf, rank, crf) makes the winner the first of each bitrate run and
    # keeps the pass deterministic for fully identical coordinates.
    pts.sort(key=lambda p: (p.bitrate_kbps, -p.vmaf, p.resolution.rank, p.crf))
    by_rate: list[RQPoint] = []
    for p in pts:
        if by_rate and by_rate[-1].bitrate_kbps == p.bitrate_kbps:
            continue
        by_rate.append(p)

    # Equal-vmaf dedup: keep the lowest bitrate.
    by_rate.sort(key=lambda p: (p.vmaf, p.bitrate_kbps, p.resolution.rank, p.crf))
    deduped: list[RQPoint] = []
    for p in by_rate:
        if deduped and deduped[-1].vmaf == p.vmaf:
            continue
        deduped.append(p)

    # Dominance filter: walk in ascending bitrate and keep only points
    # that improve vmaf.  All coordinates are unique after dedup.
    deduped.sort(key=lambda p: p.bitrate_kbps)
    survivors: list[RQPoint] = []
    best_vmaf = -1.0
    for p in deduped:
        if p.vmaf > best_vmaf:
            survivors.append(p)
            best_vmaf = p.vmaf

    # Monotone chain over the survivors.  Pop while the new point would
    # make the slope increase; zero cross keeps collinear points.
    hull: list[RQPoint] = []
    for p in survivors:
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) > 0:
            hull.pop()
        hull.append(p)

    return ParetoFront(tuple(hull))


def nearest_by_bitrate(front: ParetoFront, target_kbps: float) -> RQPoint:
    """Return the front point whose bitrate is closest to ``target_kbps``.

    Ties on distance go to the lower bitrate.  Targets beyond either end
    of the front clamp to the extremal point.
    """
    if not target_kbps > 0:
        raise ValueError(f"target bitrate must be positive, got {target_kbps}")
    return min(
        front.points,
        key=lambda p: (abs(p.bitrate_kbps - target_kbps), p.bitrate_kbps),
    )
