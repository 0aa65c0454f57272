"""Bjontegaard-style deltas between two rate-quality curves.

Both metrics interpolate with a shape-preserving monotone piecewise
cubic through (x, y) anchors and average the gap between the two curves
over the common x interval, integrating the interpolant exactly via its
antiderivative.  For the rate delta x is quality and y is log2(rate), so
the averaged log-domain gap converts to a percentage; the quality delta
swaps the axes and is reported in quality units.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InsufficientAnchorsError
from .ground_truth import BitrateLadder

logger = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_NO_OVERLAP = "no-overlap"


@dataclass(frozen=True)
class RQAnchorSet:
    """A cleaned rate-quality curve: strictly increasing in both axes."""

    points: tuple[tuple[float, float], ...]  # (bitrate_kbps, vmaf)
    dropped: int = 0

    def __post_init__(self):
        for (r0, v0), (r1, v1) in zip(self.points, self.points[1:]):
            if r1 <= r0 or v1 <= v0:
                raise ValueError("anchors must strictly increase in bitrate and vmaf")
        for r, _ in self.points:
            if not r > 0:
                raise ValueError("anchor bitrates must be positive")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "RQAnchorSet":
        """Sort, dedup, and drop dominated pairs so the curve is monotone.

        Equal-bitrate pairs keep the best vmaf; pairs that fail to improve
        vmaf as bitrate grows are dropped with a warning.
        """
        ordered = sorted(pairs, key=lambda p: (p[0], -p[1]))
        kept: list[tuple[float, float]] = []
        dropped = 0
        for rate, vmaf in ordered:
            if kept and kept[-1][0] == rate:
                dropped += 1
                continue
            if kept and vmaf <= kept[-1][1]:
                dropped += 1
                continue
            kept.append((float(rate), float(vmaf)))
        if dropped:
            logger.warning("dropped %d dominated/duplicate anchor(s)", dropped)
        return cls(points=tuple(kept), dropped=dropped)

    @classmethod
    def from_ladder(cls, ladder: BitrateLadder) -> "RQAnchorSet":
        pairs = []
        for rung in ladder.rungs:
            if rung.vmaf is None:
                raise ValueError(
                    f"ladder {ladder.scene_id!r} has rungs without vmaf; "
                    "curves need measured quality"
                )
            pairs.append((rung.bitrate_kbps, rung.vmaf))
        return cls.from_pairs(pairs)

    @property
    def bitrates(self) -> tuple[float, ...]:
        return tuple(r for r, _ in self.points)

    @property
    def vmafs(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.points)


@dataclass(frozen=True)
class BDResult:
    """Outcome of a curve comparison.

    status "ok" carries the metric; "no-overlap" means the anchor sets
    share no x interval and no number is reported.  The overlap bounds
    are recorded either way for diagnostics.
    """

    status: str
    bd_rate_percent: float | None = None
    bd_vmaf: float | None = None
    vmaf_overlap: tuple[float, float] | None = None
    log2_rate_overlap: tuple[float, float] | None = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


def _require_curve(anchors: RQAnchorSet, side: str) -> None:
    if len(anchors.points) < 2:
        raise InsufficientAnchorsError(
            f"{side} curve has {len(anchors.points)} anchor(s); "
            "need at least 2 to interpolate"
        )


def _mean_gap(
    xs_a: Sequence[float],
    ys_a: Sequence[float],
    xs_b: Sequence[float],
    ys_b: Sequence[float],
    lo: float,
    hi: float,
) -> float:
    """Average (curve_a - curve_b) over [lo, hi] by exact integration."""
    f_a = PchipInterpolator(np.asarray(xs_a), np.asarray(ys_a))
    f_b = PchipInterpolator(np.asarray(xs_b), np.asarray(ys_b))
    int_a = f_a.antiderivative()
    int_b = f_b.antiderivative()
    area = (int_a(hi) - int_a(lo)) - (int_b(hi) - int_b(lo))
    return float(area) / (hi - lo)


def bd_rate(test: RQAnchorSet, reference: RQAnchorSet) -> BDResult:
    """Average bitrate overhead of ``test`` at matched quality, percent.

    Positive means the test curve spends more bitrate than the reference
    for the same quality over the common quality interval.
    """
    _require_curve(test, "test")
    _require_curve(reference, "reference")
    lo = max(test.vmafs[0], reference.vmafs[0])
    hi = min(test.vmafs[-1], reference.vmafs[-1])
    log_overlap = _log2_rate_overlap(test, reference)
    if not hi > lo:
        return BDResult(
            status=STATUS_NO_OVERLAP,
            vmaf_overlap=(lo, hi),
            log2_rate_overlap=log_overlap,
        )
    delta = _mean_gap(
        test.vmafs,
        [math.log2(r) for r in test.bitrates],
        reference.vmafs,
        [math.log2(r) for r in reference.bitrates],
        lo,
        hi,
    )
    return BDResult(
        status=STATUS_OK,
        bd_rate_percent=100.0 * (2.0**delta - 1.0),
        vmaf_overlap=(lo, hi),
        log2_rate_overlap=log_overlap,
    )


def bd_quality(test: RQAnchorSet, reference: RQAnchorSet) -> BDResult:
    """Average quality gain of ``test`` at matched bitrate, in vmaf units.

    Negative means the test curve scores lower than the reference at the
    same bitrate over the common log2(rate) interval.
    """
    _require_curve(test, "test")
    _require_curve(reference, "reference")
    log_overlap = _log2_rate_overlap(test, reference)
    lo, hi = log_overlap
    vmaf_overlap = (
        max(test.vmafs[0], reference.vmafs[0]),
        min(test.vmafs[-1], reference.vmafs[-1]),
    )
    if not hi > lo:
        return BDResult(
            status=STATUS_NO_OVERLAP,
            vmaf_overlap=vmaf_overlap,
            log2_rate_overlap=log_overlap,
        )
    delta = _mean_gap(
        [math.log2(r) for r in test.bitrates],
        test.vmafs,
        [math.log2(r) for r in reference.bitrates],
        reference.vmafs,
        lo,
        hi,
    )
    return BDResult(
        status=STATUS_OK,
        bd_vmaf=delta,
        vmaf_overlap=vmaf_overlap,
        log2_rate_overlap=log_overlap,
    )


def _log2_rate_overlap(a: RQAnchorSet, b: RQAnchorSet) -> tuple[float, float]:
    lo = max(a.bitrates[0], b.bitrates[0])
    hi = min(a.bitrates[-1], b.bitrates[-1])
    return (math.log2(lo), math.log2(hi)) if hi > 0 and lo > 0 else (0.0, 0.0)
