"""CRF-vs-rate modelling and cross-scene calibration.

Within one resolution a scene's CRF is modelled as linear in the log2 of
bitrate: crf = zeta * log2(rate) + delta.  Calibration captures two
cross-scene regularities as linear maps: a resolution's exit CRF from
the next resolution's entry CRF, and the 360p slope from the 480p slope.
"""
from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import CalibrationUnavailableError, SchemaError, UnderdeterminedFitError
from .ground_truth import CrossoverSet
from .rq import ADJACENT_PAIRS, CRF_MAX, CRF_MIN, Resolution

logger = logging.getLogger(__name__)

CALIBRATION_FORMAT = "crf-ladder-calibration"
CALIBRATION_VERSION = 1

FIT_TWO_POINT = "two-point-exact"
FIT_LEAST_SQUARES = "least-squares"
FIT_SLOPE_INFERRED = "slope-inferred"


@dataclass(frozen=True)
class CrfRateModel:
    """crf = zeta * log2(rate_kbps) + delta for one resolution."""

    resolution: Resolution
    zeta: float
    delta: float
    source: str
    r_squared: float | None = None

    @property
    def physical(self) -> bool:
        """Rate must fall as CRF rises, so a physical slope is negative."""
        return self.zeta < 0.0

    def rate_for_crf(self, crf: float) -> float:
        if self.zeta == 0.0:
            raise ZeroDivisionError("zero-slope model has no rate inverse")
        return 2.0 ** ((crf - self.delta) / self.zeta)


def fit_crf_rate(
    resolution: Resolution, samples: Sequence[tuple[int, float]]
) -> CrfRateModel:
    """Fit the linear CRF / log2(rate) model.

    Args:
        resolution: resolution the samples belong to.
        samples: (crf, bitrate_kbps) pairs; two distinct bitrates minimum.

    Returns:
        An exact model for two samples, a least-squares one (with R^2)
        for more.  A non-negative slope is flagged in the log and via
        ``model.physical`` but not rejected.
    """
    if len(samples) < 2:
        raise UnderdeterminedFitError(
            f"{resolution.label}: need at least 2 samples, got {len(samples)}"
        )
    rates = [r for _, r in samples]
    if any(not r > 0 for r in rates):
        raise ValueError("bitrates must be positive")
    if len(set(rates)) < 2:
        raise UnderdeterminedFitError(
            f"{resolution.label}: all {len(samples)} samples share one bitrate"
        )
    xs = np.log2(np.asarray(rates, dtype=float))
    ys = np.asarray([c for c, _ in samples], dtype=float)

    if len(samples) == 2:
        zeta = (ys[1] - ys[0]) / (xs[1] - xs[0])
        delta = ys[0] - zeta * xs[0]
        model = CrfRateModel(resolution, float(zeta), float(delta), FIT_TWO_POINT)
    else:
        zeta, delta = np.polyfit(xs, ys, 1)
        resid = ys - (zeta * xs + delta)
        total = ys - ys.mean()
        ss_tot = float(total @ total)
        r_squared = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
        model = CrfRateModel(
            resolution, float(zeta), float(delta), FIT_LEAST_SQUARES, r_squared
        )
    if not model.physical:
        logger.warning(
            "%s: fitted slope %.4f is non-negative; model is non-physical",
            resolution.label,
            model.zeta,
        )
    return model


class CrfQuery(NamedTuple):
    """An integer CRF lookup: the grid value plus how it was reached."""

    crf: int
    raw: float
    clamped: bool


def _round_half_away(x: float) -> int:
    if x >= 0:
        return int(math.floor(x + 0.5))
    return int(math.ceil(x - 0.5))


def _to_grid(raw: float) -> CrfQuery:
    rounded = _round_half_away(raw)
    clamped = min(CRF_MAX, max(CRF_MIN, rounded))
    return CrfQuery(crf=clamped, raw=raw, clamped=clamped != rounded)


def crf_for_bitrate(model: CrfRateModel, target_kbps: float) -> CrfQuery:
    """Invert the model at a target bitrate onto the integer CRF grid.

    Rounds half away from zero, then clamps into the grid; the flag
    records whether clamping moved the value.
    """
    if not target_kbps > 0:
        raise ValueError(f"target bitrate must be positive, got {target_kbps}")
    raw = model.zeta * math.log2(target_kbps) + model.delta
    return _to_grid(raw)


@dataclass(frozen=True)
class LinearMap:
    """y = slope * x + intercept, with the fit's correlation and size."""

    slope: float
    intercept: float
    plcc: float
    n_samples: int

    def apply(self, x: float) -> float:
        return self.slope * x + self.intercept


@dataclass(frozen=True)
class Calibration:
    """Cross-scene linear maps learned from exhaustively swept scenes.

    crossover_maps is keyed by the higher resolution of each adjacent
    pair: map input is the lower resolution's entry (low) CRF, output the
    higher resolution's exit (high) CRF.  slope_maps is keyed by the
    resolution whose slope is being inferred.
    """

    crossover_maps: Mapping[Resolution, LinearMap]
    slope_maps: Mapping[Resolution, LinearMap]
    n_scenes: int

    def crossover_map(self, higher: Resolution) -> LinearMap:
        try:
            return self.crossover_maps[higher]
        except KeyError:
            raise CalibrationUnavailableError(
                f"no crossover map for {higher.label}; "
                "calibration lacked usable training pairs"
            ) from None

    def slope_map(self, resolution: Resolution) -> LinearMap:
        try:
            return self.slope_maps[resolution]
        except KeyError:
            raise CalibrationUnavailableError(
                f"no slope map for {resolution.label}; "
                "calibration lacked usable training pairs"
            ) from None


@dataclass(frozen=True)
class CalibrationSample:
    """One training scene's contribution to calibration."""

    crossovers: CrossoverSet
    zetas: Mapping[Resolution, float]


def _fit_linear_map(pairs: Sequence[tuple[float, float]]) -> LinearMap | None:
    if len(pairs) < 2:
        return None
    xs = np.asarray([x for x, _ in pairs], dtype=float)
    ys = np.asarray([y for _, y in pairs], dtype=float)
    if np.ptp(xs) == 0.0:
        return None
    slope, intercept = np.polyfit(xs, ys, 1)
    if np.ptp(ys) == 0.0:
        plcc = 1.0  # degenerate but exact: constant output, zero residual
    else:
        plcc = float(np.corrcoef(xs, ys)[0, 1])
    return LinearMap(float(slope), float(intercept), plcc, len(pairs))


def fit_calibration(samples: Sequence[CalibrationSample]) -> Calibration:
    """Fit crossover and slope maps from training scenes.

    Needs at least two scenes overall.  Individual maps with fewer than
    two usable pairs (or no spread in x) are left out rather than fitted;
    consumers get a clear error when they ask for a missing map.
    """
    if len(samples) < 2:
        raise UnderdeterminedFitError(
            f"calibration needs at least 2 training scenes, got {len(samples)}"
        )
    crossover_maps: dict[Resolution, LinearMap] = {}
    for higher, lower in ADJACENT_PAIRS:
        pairs = []
        for s in samples:
            hi_range = s.crossovers.for_resolution(higher)
            lo_range = s.crossovers.for_resolution(lower)
            if hi_range is None or lo_range is None:
                continue
            pairs.append((float(lo_range.crf_low), float(hi_range.crf_high)))
        fitted = _fit_linear_map(pairs)
        if fitted is None:
            logger.warning(
                "crossover map %s<-%s unavailable (%d usable pairs)",
                higher.label,
                lower.label,
                len(pairs),
            )
        else:
            crossover_maps[higher] = fitted

    slope_pairs = []
    for s in samples:
        z480 = s.zetas.get(Resolution.P480)
        z360 = s.zetas.get(Resolution.P360)
        if z480 is None or z360 is None:
            continue
        slope_pairs.append((float(z480), float(z360)))
    slope_maps: dict[Resolution, LinearMap] = {}
    fitted = _fit_linear_map(slope_pairs)
    if fitted is None:
        logger.warning("slope map 360p<-480p unavailable (%d usable pairs)", len(slope_pairs))
    else:
        slope_maps[Resolution.P360] = fitted

    return Calibration(
        crossover_maps=crossover_maps, slope_maps=slope_maps, n_scenes=len(samples)
    )


def infer_crossover_high(calibration: Calibration, higher: Resolution, crf_low_next: int) -> CrfQuery:
    """Predict the higher resolution's exit CRF from the next one's entry CRF."""
    m = calibration.crossover_map(higher)
    return _to_grid(m.apply(float(crf_low_next)))


def _map_to_json(m: LinearMap) -> dict:
    return {
        "slope": m.slope,
        "intercept": m.intercept,
        "plcc": m.plcc,
        "n_samples": m.n_samples,
    }


def _map_from_json(obj: dict, where: str) -> LinearMap:
    try:
        return LinearMap(
            slope=float(obj["slope"]),
            intercept=float(obj["intercept"]),
            plcc=float(obj["plcc"]),
            n_samples=int(obj["n_samples"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad linear map at {where}: {exc}") from exc


def calibration_to_json(calibration: Calibration) -> dict:
    return {
        "format": CALIBRATION_FORMAT,
        "version": CALIBRATION_VERSION,
        "n_scenes": calibration.n_scenes,
        "crossover_maps": {
            res.label: _map_to_json(m) for res, m in calibration.crossover_maps.items()
        },
        "slope_maps": {
            res.label: _map_to_json(m) for res, m in calibration.slope_maps.items()
        },
    }


def calibration_from_json(obj: dict) -> Calibration:
    if not isinstance(obj, dict):
        raise SchemaError("calibration file must hold a JSON object")
    if obj.get("format") != CALIBRATION_FORMAT:
        raise SchemaError(
            f"unrecognized calibration format {obj.get('format')!r}; "
            f"expected {CALIBRATION_FORMAT!r}"
        )
    if obj.get("version") != CALIBRATION_VERSION:
        raise SchemaError(
            f"unsupported calibration version {obj.get('version')!r}; "
            f"this build reads version {CALIBRATION_VERSION}"
        )
    crossover_maps = {
        Resolution.from_label(label): _map_from_json(m, f"crossover_maps.{label}")
        for label, m in obj.get("crossover_maps", {}).items()
    }
    slope_maps = {
        Resolution.from_label(label): _map_from_json(m, f"slope_maps.{label}")
        for label, m in obj.get("slope_maps", {}).items()
    }
    return Calibration(
        crossover_maps=crossover_maps,
        slope_maps=slope_maps,
        n_scenes=int(obj.get("n_scenes", 0)),
    )


def save_calibration(calibration: Calibration, path: Path | str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(calibration_to_json(calibration), indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def load_calibration(path: Path | str) -> Calibration:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"calibration file {path} is not valid JSON: {exc}") from exc
    return calibration_from_json(obj)
