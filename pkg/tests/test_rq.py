from __future__ import annotations

import numpy as np
import pytest

from ladderkit import (
    CRF_GRID,
    RESOLUTIONS,
    EmptySweepError,
    ParetoFront,
    Resolution,
    RQPoint,
    RQSweep,
    build_pareto_front,
    nearest_by_bitrate,
)
from ladderkit.rq import COMPLETE_SWEEP_SIZE

from oracles import front_indices_oracle


def _pt(bitrate: float, vmaf: float, res: Resolution = Resolution.P720, crf: int = 30) -> RQPoint:
    return RQPoint(resolution=res, crf=crf, bitrate_kbps=bitrate, vmaf=vmaf)


def _coords(front: ParetoFront) -> list[tuple[float, float]]:
    return [(p.bitrate_kbps, p.vmaf) for p in front.points]


def test_point_validation():
    with pytest.raises(ValueError):
        _pt(100.0, 50.0, crf=9)
    with pytest.raises(ValueError):
        _pt(100.0, 50.0, crf=52)
    with pytest.raises(ValueError):
        _pt(0.0, 50.0)
    with pytest.raises(ValueError):
        _pt(100.0, 100.5)
    with pytest.raises(ValueError):
        _pt(100.0, -0.1)


def test_sweep_rejects_duplicate_cells():
    a = _pt(100.0, 40.0, Resolution.P480, 20)
    b = _pt(200.0, 50.0, Resolution.P480, 20)
    with pytest.raises(ValueError, match="duplicate"):
        RQSweep(scene_id="s", points=(a, b))


def test_sweep_completeness():
    points = tuple(
        RQPoint(resolution=res, crf=crf, bitrate_kbps=float(1000 * res.rank + crf), vmaf=50.0)
        for res in RESOLUTIONS
        for crf in CRF_GRID
    )
    assert len(points) == COMPLETE_SWEEP_SIZE == 168
    sweep = RQSweep(scene_id="s", points=points)
    assert sweep.is_complete
    partial = RQSweep(scene_id="s", points=points[:-1])
    assert not partial.is_complete


def test_front_hand_example():
    # Cloud: (300, 20) is dominated by (200, 50); (800, 85) loses the
    # equal-bitrate tie to (800, 90); (500, 60) loses the equal-vmaf tie
    # to (400, 60); (400, 60) then sits below the (200, 50)-(800, 90)
    # chord, which passes through 63.33 at bitrate 400.
    cloud = [
        _pt(100.0, 30.0),
        _pt(200.0, 50.0),
        _pt(400.0, 60.0),
        _pt(800.0, 90.0, crf=12),
        _pt(300.0, 20.0),
        _pt(800.0, 85.0, crf=13),
        _pt(500.0, 60.0),
    ]
    front = build_pareto_front(cloud)
    assert _coords(front) == [(100.0, 30.0), (200.0, 50.0), (800.0, 90.0)]
    assert front.points[-1].crf == 12


def test_front_keeps_collinear_points():
    cloud = [
        _pt(100.0, 40.0),
        _pt(200.0, 50.0),
        _pt(300.0, 60.0),
        _pt(400.0, 70.0),
        _pt(250.0, 30.0),
    ]
    front = build_pareto_front(cloud)
    assert _coords(front) == [
        (100.0, 40.0),
        (200.0, 50.0),
        (300.0, 60.0),
        (400.0, 70.0),
    ]


def test_front_single_point_and_empty():
    front = build_pareto_front([_pt(500.0, 70.0)])
    assert _coords(front) == [(500.0, 70.0)]
    with pytest.raises(EmptySweepError):
        build_pareto_front([])


def test_front_invariant_enforcement():
    a, b = _pt(100.0, 40.0), _pt(200.0, 50.0)
    with pytest.raises(EmptySweepError):
        ParetoFront(points=())
    with pytest.raises(ValueError, match="bitrate"):
        ParetoFront(points=(b, a))
    with pytest.raises(ValueError, match="vmaf"):
        ParetoFront(points=(a, _pt(200.0, 40.0)))
    # Slope rises from 0.01 to 0.09: not a valid upper hull.
    with pytest.raises(ValueError, match="slope"):
        ParetoFront(points=(a, _pt(200.0, 41.0), _pt(300.0, 50.0)))


def test_front_matches_oracle_on_random_clouds():
    rng = np.random.default_rng(20240811)
    for _ in range(300):
        n = int(rng.integers(1, 51))
        rates = rng.uniform(50.0, 20000.0, n)
        vmafs = rng.uniform(0.0, 100.0, n)
        points = [
            RQPoint(
                resolution=RESOLUTIONS[int(rng.integers(0, 4))],
                crf=int(rng.integers(10, 52)),
                bitrate_kbps=float(r),
                vmaf=float(v),
            )
            for r, v in zip(rates, vmafs)
        ]
        got = _coords(build_pareto_front(points))
        want = [
            (float(rates[i]), float(vmafs[i]))
            for i in front_indices_oracle(rates, vmafs)
        ]
        assert got == want


def test_nearest_by_bitrate_ties_and_clamps():
    front = build_pareto_front([_pt(100.0, 30.0), _pt(200.0, 50.0), _pt(800.0, 90.0)])
    # Equidistant between 100 and 200: lower bitrate wins.
    assert nearest_by_bitrate(front, 150.0).bitrate_kbps == 100.0
    assert nearest_by_bitrate(front, 151.0).bitrate_kbps == 200.0
    assert nearest_by_bitrate(front, 5.0).bitrate_kbps == 100.0
    assert nearest_by_bitrate(front, 1e6).bitrate_kbps == 800.0
    with pytest.raises(ValueError):
        nearest_by_bitrate(front, 0.0)


def test_front_resolution_filter_and_extents():
    cloud = [
        _pt(100.0, 30.0, Resolution.P360, 40),
        _pt(400.0, 60.0, Resolution.P480, 30),
        _pt(1600.0, 85.0, Resolution.P1080, 20),
    ]
    front = build_pareto_front(cloud)
    assert front.min_bitrate_kbps == 100.0
    assert front.max_bitrate_kbps == 1600.0
    labels = [p.resolution.label for p in front.for_resolution(Resolution.P480)]
    assert labels == ["480p"]
